//! Uncertainty of a realization set: edit distances to the medoid
//! transcript, or squared distances to the mean posterior sequence, and
//! summary features of those distances.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::asr::{realize, DropoutScope, Recognizer, Transcript};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest histogram bin; larger distances are counted here.
pub const HIST_TOP: usize = 19;
pub const HIST_BINS: usize = HIST_TOP + 1;

/// Unit-cost edit distance over characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Index minimising the summed distance to all items; lowest index wins ties.
pub fn medoid<I, D: Fn(&I, &I) -> f64>(items: &[I], d: D) -> Result<usize> {
    if items.is_empty() {
        return Err(Error::Empty);
    }
    let n = items.len();
    let mut pair = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = d(&items[i], &items[j]);
            pair[i * n + j] = v;
            pair[j * n + i] = v;
        }
    }
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let sum: f64 = pair[i * n..(i + 1) * n].iter().sum();
        if sum < best.1 {
            best = (i, sum);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Char,
    Prob,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Char => "char",
            FeatureMode::Prob => "prob",
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" => Ok(FeatureMode::Char),
            "prob" => Ok(FeatureMode::Prob),
            _ => Err(Error::InvalidParameter(format!("unknown feature mode {s:?}"))),
        }
    }
}

/// Distances from every realization to the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceDistribution {
    pub mode: FeatureMode,
    pub distances: Vec<f64>,
    /// Counts over `0..=HIST_TOP` (char mode only).
    pub histogram: Option<Vec<usize>>,
    /// Medoid transcript (char mode only).
    pub medoid: Option<Transcript>,
}

impl DistanceDistribution {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

fn histogram(distances: &[usize]) -> Vec<usize> {
    let mut h = vec![0; HIST_BINS];
    for &d in distances {
        h[d.min(HIST_TOP)] += 1;
    }
    h
}

/// Edit distance of each transcript to the medoid (which contributes 0).
pub fn char_distribution(transcripts: &[Transcript]) -> Result<DistanceDistribution> {
    if transcripts.len() < 2 {
        return Err(Error::TooFew { needed: 2, got: transcripts.len() });
    }
    let m = medoid(transcripts, |a, b| levenshtein(a.as_str(), b.as_str()) as f64)?;
    let reference = &transcripts[m];
    let d: Vec<usize> = transcripts.iter().map(|t| levenshtein(reference.as_str(), t.as_str())).collect();
    Ok(DistanceDistribution {
        mode: FeatureMode::Char,
        distances: d.iter().map(|&v| v as f64).collect(),
        histogram: Some(histogram(&d)),
        medoid: Some(reference.clone()),
    })
}

/// `||y_i - mean||^2 / T` for each posterior sequence `y_i` (`T x K`).
pub fn prob_distribution<T: Real>(posteriors: &[Array2<T>]) -> Result<DistanceDistribution> {
    if posteriors.len() < 2 {
        return Err(Error::TooFew { needed: 2, got: posteriors.len() });
    }
    let dim = posteriors[0].dim();
    if let Some(bad) = posteriors.iter().find(|p| p.dim() != dim) {
        return Err(Error::Shape(format!("realization shapes {:?} and {:?}", dim, bad.dim())));
    }
    if dim.0 == 0 {
        return Err(Error::Empty);
    }
    let mut mean = Array2::<f64>::zeros(dim);
    for p in posteriors {
        mean.zip_mut_with(p, |m, &v| *m += v.to_f64_lossy());
    }
    mean /= posteriors.len() as f64;
    let frames = dim.0 as f64;
    let distances = posteriors
        .iter()
        .map(|p| {
            let mut sq = 0.0;
            ndarray::Zip::from(p).and(&mean).for_each(|&v, &m| sq += (v.to_f64_lossy() - m).powi(2));
            sq / frames
        })
        .collect();
    Ok(DistanceDistribution { mode: FeatureMode::Prob, distances, histogram: None, medoid: None })
}

/// Which moments populate `m1..m4`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentKind {
    /// `(1/I) sum d_i^k`.
    #[default]
    Raw,
    /// Mean, then central moments of order 2..4.
    Central,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    /// Mean squared distance. In prob mode the distances are already squared.
    pub u2: f64,
    pub entropy: Option<f64>,
    /// Histogram divided by the realization count (char mode only).
    pub full_hist: Option<Vec<f64>>,
}

impl FeatureVector {
    pub fn moments4(&self) -> [f64; 4] {
        [self.m1, self.m2, self.m3, self.m4]
    }

    pub fn is_finite(&self) -> bool {
        self.moments4().iter().chain(std::iter::once(&self.u2)).all(|v| v.is_finite())
            && self.entropy.map_or(true, f64::is_finite)
            && self.full_hist.as_ref().map_or(true, |h| h.iter().all(|v| v.is_finite()))
    }
}

fn raw_moment(d: &[f64], k: i32) -> f64 {
    d.iter().map(|v| v.powi(k)).sum::<f64>() / d.len() as f64
}

pub fn moments(dist: &DistanceDistribution, kind: MomentKind) -> Result<FeatureVector> {
    let d = &dist.distances;
    if d.len() < 2 {
        return Err(Error::TooFew { needed: 2, got: d.len() });
    }
    let [m1, m2, m3, m4] = match kind {
        MomentKind::Raw => [raw_moment(d, 1), raw_moment(d, 2), raw_moment(d, 3), raw_moment(d, 4)],
        MomentKind::Central => {
            let mean = raw_moment(d, 1);
            let c = |k: i32| d.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / d.len() as f64;
            [mean, c(2), c(3), c(4)]
        }
    };
    let u2 = match dist.mode {
        FeatureMode::Char => raw_moment(d, 2),
        FeatureMode::Prob => raw_moment(d, 1),
    };
    let (entropy, full_hist) = match &dist.histogram {
        Some(h) => (Some(entropy(dist)?), Some(h.iter().map(|&c| c as f64 / d.len() as f64).collect())),
        None => (None, None),
    };
    Ok(FeatureVector { m1, m2, m3, m4, u2, entropy, full_hist })
}

/// Shannon entropy (nats) of the normalised char-mode histogram.
pub fn entropy(dist: &DistanceDistribution) -> Result<f64> {
    let h = dist.histogram.as_ref().ok_or_else(|| Error::Mode("entropy needs a char-mode histogram".into()))?;
    let total: usize = h.iter().sum();
    if total == 0 {
        return Err(Error::Empty);
    }
    Ok(h.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum())
}

/// Settings for measuring one input's uncertainty under dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyConfig {
    pub mode: FeatureMode,
    /// Dropout rate applied at inference.
    pub rate: f64,
    pub realizations: usize,
    pub seed: u64,
    pub scope: DropoutScope,
    pub moments: MomentKind,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            mode: FeatureMode::Char,
            rate: 0.1,
            realizations: 50,
            seed: 23,
            scope: DropoutScope::DenseOnly,
            moments: MomentKind::Raw,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::InvalidParameter(format!("dropout rate {} must lie in (0, 1)", self.rate)));
        }
        if self.realizations < 2 {
            return Err(Error::TooFew { needed: 2, got: self.realizations });
        }
        Ok(())
    }
}

/// Runs the dropout realizations on `x` and summarises their spread.
pub fn analyze<T: Real>(rec: &Recognizer<T>, x: &[T], cfg: &UncertaintyConfig) -> Result<(FeatureVector, DistanceDistribution)> {
    cfg.validate()?;
    let r = realize(rec, x, cfg.rate, cfg.realizations, cfg.seed, cfg.scope)?;
    let dist = match cfg.mode {
        FeatureMode::Char => char_distribution(&r.transcripts)?,
        FeatureMode::Prob => prob_distribution(&r.posteriors.into_iter().map(|p| p.rows).collect::<Vec<_>>())?,
    };
    let fv = moments(&dist, cfg.moments)?;
    if !fv.is_finite() {
        return Err(Error::Divergence { step: 0, detail: "non-finite uncertainty feature".into() });
    }
    Ok((fv, dist))
}
