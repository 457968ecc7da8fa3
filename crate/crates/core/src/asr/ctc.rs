//! CTC negative log-likelihood with its exact gradient on the logits,
//! computed with the forward-backward recursions in log space.

use ndarray::Array2;

use super::alphabet::BLANK;
use crate::error::{Error, Result};
use crate::scalar::{log_add, log_sum_exp, Real};

#[derive(Clone, Debug)]
pub struct CtcLoss<T: Real> {
    /// `-ln p(target | x)`
    pub loss: T,
    /// `dloss / dlogits`, same shape as the logits.
    pub grad: Array2<T>,
}

/// Minimum number of frames that can emit `target`: one per label plus a
/// separating blank between adjacent repeats.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn log_softmax<T: Real>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let lse = log_sum_exp(row.as_slice().expect("standard layout"));
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn extended(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &l in target {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

fn validate(frames: usize, width: usize, target: &[usize]) -> Result<()> {
    if frames == 0 {
        return Err(Error::Shape("no frames".into()));
    }
    if let Some(&bad) = target.iter().find(|&&l| l == BLANK || l >= width) {
        return Err(Error::Shape(format!("target label {bad} outside 1..{width}")));
    }
    let required = min_frames(target);
    if required > frames {
        return Err(Error::InfeasibleTarget { required, available: frames });
    }
    Ok(())
}

/// Log forward variables: `alpha[t][s]` includes the emission at `t`.
fn forward_pass<T: Real>(logp: &Array2<T>, ext: &[usize]) -> Array2<T> {
    let (frames, states) = (logp.nrows(), ext.len());
    let mut alpha = Array2::from_elem((frames, states), T::neg_infinity());
    alpha[(0, 0)] = logp[(0, ext[0])];
    if states > 1 {
        alpha[(0, 1)] = logp[(0, ext[1])];
    }
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha[(t - 1, s)];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1, s - 1)]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha[(t - 1, s - 2)]);
            }
            alpha[(t, s)] = acc + logp[(t, ext[s])];
        }
    }
    alpha
}

/// Log backward variables: `beta[t][s]` excludes the emission at `t`.
fn backward_pass<T: Real>(logp: &Array2<T>, ext: &[usize]) -> Array2<T> {
    let (frames, states) = (logp.nrows(), ext.len());
    let mut beta = Array2::from_elem((frames, states), T::neg_infinity());
    beta[(frames - 1, states - 1)] = T::zero();
    if states > 1 {
        beta[(frames - 1, states - 2)] = T::zero();
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut acc = beta[(t + 1, s)] + logp[(t + 1, ext[s])];
            if s + 1 < states {
                acc = log_add(acc, beta[(t + 1, s + 1)] + logp[(t + 1, ext[s + 1])]);
            }
            if s + 2 < states && ext[s + 2] != BLANK && ext[s + 2] != ext[s] {
                acc = log_add(acc, beta[(t + 1, s + 2)] + logp[(t + 1, ext[s + 2])]);
            }
            beta[(t, s)] = acc;
        }
    }
    beta
}

fn total_log_prob<T: Real>(alpha: &Array2<T>) -> T {
    let (frames, states) = alpha.dim();
    let last = alpha[(frames - 1, states - 1)];
    if states > 1 {
        log_add(last, alpha[(frames - 1, states - 2)])
    } else {
        last
    }
}

/// CTC loss and gradient with respect to pre-softmax activations.
pub fn ctc_loss<T: Real>(logits: &Array2<T>, target: &[usize]) -> Result<CtcLoss<T>> {
    let (frames, width) = logits.dim();
    validate(frames, width, target)?;
    let logp = log_softmax(logits);
    let ext = extended(target);
    let alpha = forward_pass(&logp, &ext);
    let beta = backward_pass(&logp, &ext);
    let log_p = total_log_prob(&alpha);
    if !log_p.is_finite() {
        return Err(Error::InfeasibleTarget { required: min_frames(target), available: frames });
    }
    let mut grad = logp.mapv(|v| v.exp());
    for t in 0..frames {
        // occupancy per output label, accumulated in log space
        let mut occ = vec![T::neg_infinity(); width];
        for (s, &label) in ext.iter().enumerate() {
            occ[label] = log_add(occ[label], alpha[(t, s)] + beta[(t, s)]);
        }
        for (k, o) in occ.into_iter().enumerate() {
            if o != T::neg_infinity() {
                grad[(t, k)] -= (o - log_p).exp();
            }
        }
    }
    Ok(CtcLoss { loss: -log_p, grad })
}

/// CTC loss from posterior rows (no gradient).
pub fn ctc_loss_from_posteriors<T: Real>(posteriors: &Array2<T>, target: &[usize]) -> Result<T> {
    let (frames, width) = posteriors.dim();
    validate(frames, width, target)?;
    let logp = posteriors.mapv(|p| p.ln());
    let ext = extended(target);
    let log_p = total_log_prob(&forward_pass(&logp, &ext));
    if !log_p.is_finite() {
        return Err(Error::InfeasibleTarget { required: min_frames(target), available: frames });
    }
    Ok(-log_p)
}

#[cfg(test)]
pub(crate) mod oracle {
    use ndarray::Array2;

    /// Collapses a frame path: merge repeats, then drop blanks.
    pub fn collapse(path: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut prev = None;
        for &p in path {
            if Some(p) != prev && p != 0 {
                out.push(p);
            }
            prev = Some(p);
        }
        out
    }

    /// `-ln sum over every path of length T collapsing to target`.
    pub fn brute_force_loss(post: &Array2<f64>, target: &[usize]) -> f64 {
        let (frames, width) = post.dim();
        let mut total = 0.0;
        let mut path = vec![0usize; frames];
        loop {
            if collapse(&path) == target {
                total += path.iter().enumerate().map(|(t, &k)| post[(t, k)]).product::<f64>();
            }
            let mut i = 0;
            loop {
                if i == frames {
                    return -total.ln();
                }
                path[i] += 1;
                if path[i] < width {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::brute_force_loss;
    use super::*;
    use crate::asr::model::CtcPosteriors;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_logits(frames: usize, width: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((frames, width), |_| rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn single_frame_single_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = random_logits(1, 3, &mut rng);
        let post = CtcPosteriors::from_logits(&logits).rows;
        let out = ctc_loss(&logits, &[1]).unwrap();
        assert!((out.loss + post[(0, 1)].ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_all_blank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = random_logits(3, 4, &mut rng);
        let post = CtcPosteriors::from_logits(&logits).rows;
        let expect: f64 = -(0..3).map(|t| post[(t, 0)].ln()).sum::<f64>();
        assert!((ctc_loss(&logits, &[]).unwrap().loss - expect).abs() < 1e-12);
    }

    #[test]
    fn matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let frames = rng.gen_range(1..=6);
            let width = rng.gen_range(2..=5);
            let len = rng.gen_range(0..=3);
            let target: Vec<usize> = (0..len).map(|_| rng.gen_range(1..width)).collect();
            let logits = random_logits(frames, width, &mut rng);
            let post = CtcPosteriors::from_logits(&logits).rows;
            match ctc_loss(&logits, &target) {
                Ok(out) => {
                    let expect = brute_force_loss(&post, &target);
                    assert!((out.loss - expect).abs() < 1e-8, "{target:?} T={frames}: {} vs {expect}", out.loss);
                    let from_post = ctc_loss_from_posteriors(&post, &target).unwrap();
                    assert!((from_post - expect).abs() < 1e-8);
                }
                Err(Error::InfeasibleTarget { required, available }) => {
                    assert!(required > available);
                    assert!(brute_force_loss(&post, &target).is_infinite());
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for target in [vec![1, 2], vec![2, 2], vec![1], vec![]] {
            let logits = random_logits(6, 3, &mut rng);
            let out = ctc_loss(&logits, &target).unwrap();
            let h = 1e-6;
            for t in 0..6 {
                for k in 0..3 {
                    let mut p = logits.clone();
                    let mut m = logits.clone();
                    p[(t, k)] += h;
                    m[(t, k)] -= h;
                    let fd = (ctc_loss(&p, &target).unwrap().loss - ctc_loss(&m, &target).unwrap().loss) / (2.0 * h);
                    assert!((fd - out.grad[(t, k)]).abs() < 1e-7, "{target:?} ({t},{k})");
                }
            }
            // softmax gradient rows sum to zero
            for row in out.grad.rows() {
                assert!(row.sum().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn infeasible_targets() {
        let logits = Array2::<f64>::zeros((2, 3));
        assert!(matches!(ctc_loss(&logits, &[1, 1]), Err(Error::InfeasibleTarget { required: 3, available: 2 })));
        assert!(matches!(ctc_loss(&logits, &[1, 2, 1]), Err(Error::InfeasibleTarget { .. })));
        assert!(ctc_loss(&logits, &[1, 2]).is_ok());
        assert!(matches!(ctc_loss(&logits, &[3]), Err(Error::Shape(_))));
    }

    #[test]
    fn loss_is_non_negative_and_zero_for_certain_path() {
        let mut logits = Array2::<f64>::from_elem((3, 3), -1e3);
        logits[(0, 1)] = 0.0;
        logits[(1, 0)] = 0.0;
        logits[(2, 2)] = 0.0;
        let out = ctc_loss(&logits, &[1, 2]).unwrap();
        assert!(out.loss >= 0.0 && out.loss < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            assert!(ctc_loss(&random_logits(5, 4, &mut rng), &[1, 3]).unwrap().loss > 0.0);
        }
    }

    #[test]
    fn long_sequences_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits = random_logits(400, 19, &mut rng) * 5.0;
        let target: Vec<usize> = (0..40).map(|i| 1 + i % 18).collect();
        let out = ctc_loss(&logits, &target).unwrap();
        assert!(out.loss.is_finite() && out.grad.iter().all(|g| g.is_finite()));
    }
}
