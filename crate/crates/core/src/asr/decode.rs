use ndarray::Array2;

use super::alphabet::{Alphabet, Transcript, BLANK};
use crate::scalar::Real;

/// Per-frame argmax (lowest index wins ties), repeats merged, blanks removed.
pub fn greedy_labels<T: Real>(posteriors: &Array2<T>) -> Vec<usize> {
    let mut labels = Vec::new();
    let mut prev = None;
    for row in posteriors.rows() {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        if Some(best) != prev && best != BLANK {
            labels.push(best);
        }
        prev = Some(best);
    }
    labels
}

pub fn greedy_decode<T: Real>(posteriors: &Array2<T>, alphabet: &Alphabet) -> Transcript {
    Transcript(alphabet.decode(&greedy_labels(posteriors)))
}
