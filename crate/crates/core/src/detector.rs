//! Original-versus-adversarial classifiers over uncertainty features, the
//! per-original train/test split and accuracy/AUC evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::FeatureVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Original,
    Adversarial,
}

impl Label {
    fn is_adv(self) -> bool {
        self == Label::Adversarial
    }

    /// `+1` adversarial, `-1` original.
    fn sign(self) -> f64 {
        if self.is_adv() {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub sample_id: String,
    /// Identifier of the clean utterance this sample derives from.
    pub original_id: String,
    /// Attack name; `None` for originals.
    pub attack: Option<String>,
    pub label: Label,
    pub features: FeatureVector,
}

/// Splits by original utterance so no original and its derivatives straddle
/// the split; `floor(0.7 n)` originals go to training.
pub fn split_70_30(samples: &[LabeledFeature], seed: u64) -> Result<(Vec<LabeledFeature>, Vec<LabeledFeature>)> {
    let mut ids: Vec<&str> = samples.iter().map(|s| s.original_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 10 {
        return Err(Error::TooFew { needed: 10, got: ids.len() });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ids.len() * 7 / 10;
    let train_ids: std::collections::BTreeSet<&str> = ids[..n_train].iter().copied().collect();
    let (train, test) = samples.iter().cloned().partition(|s| train_ids.contains(s.original_id.as_str()));
    Ok((train, test))
}

fn check_both_classes(samples: &[LabeledFeature]) -> Result<()> {
    let adv = samples.iter().filter(|s| s.label.is_adv()).count();
    if adv == 0 || adv == samples.len() {
        return Err(Error::OneClass);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Ds,
    Svm4,
    Svmf,
    Tree,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [ClassifierKind::Ds, ClassifierKind::Svm4, ClassifierKind::Svmf, ClassifierKind::Tree];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Ds => "ds",
            ClassifierKind::Svm4 => "svm4",
            ClassifierKind::Svmf => "svmf",
            ClassifierKind::Tree => "tree",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown classifier {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Moments4,
    FullHist,
}

impl FeatureSet {
    pub fn extract(self, f: &FeatureVector) -> Result<Vec<f64>> {
        match self {
            FeatureSet::Moments4 => Ok(f.moments4().to_vec()),
            FeatureSet::FullHist => f
                .full_hist
                .clone()
                .ok_or_else(|| Error::Mode("the full histogram exists only for char-mode features".into())),
        }
    }
}

/// Depth-1 threshold rule on `u2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StumpModel {
    pub threshold: f64,
    /// `+1`: large `u2` is adversarial; `-1`: small `u2` is.
    pub polarity: f64,
}

impl StumpModel {
    pub fn score(&self, f: &FeatureVector) -> f64 {
        self.polarity * (f.u2 - self.threshold)
    }
}

fn stump_accuracy(points: &[(f64, bool)], threshold: f64, polarity: f64) -> usize {
    points.iter().filter(|(u, adv)| (polarity * (u - threshold) > 0.0) == *adv).count()
}

/// Maximises training accuracy over midpoints of the sorted `u2` values and
/// two out-of-range thresholds; ties go to the smaller threshold, then `+1`.
pub fn train_stump(train: &[LabeledFeature]) -> Result<StumpModel> {
    check_both_classes(train)?;
    let points: Vec<(f64, bool)> = train.iter().map(|s| (s.features.u2, s.label.is_adv())).collect();
    let mut values: Vec<f64> = points.iter().map(|p| p.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut candidates = vec![values[0] - 1.0];
    candidates.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(values[values.len() - 1] + 1.0);
    let mut best = (StumpModel { threshold: candidates[0], polarity: 1.0 }, 0usize);
    for &t in &candidates {
        for polarity in [1.0, -1.0] {
            let acc = stump_accuracy(&points, t, polarity);
            if acc > best.1 {
                best = (StumpModel { threshold: t, polarity }, acc);
            }
        }
    }
    Ok(best.0)
}

/// Per-feature standardisation fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let s = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Weight of the mean hinge loss against `0.5 |w|^2`.
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, tolerance: 1e-6, max_iterations: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub feature_set: FeatureSet,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
    pub c: f64,
}

impl LinearSvmModel {
    pub fn score(&self, f: &FeatureVector) -> Result<f64> {
        let x = self.standardizer.apply(&self.feature_set.extract(f)?);
        Ok(dot(&self.weights, &x) + self.bias)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `0.5 |w|^2 + (c / n) sum max(0, 1 - y (w.x + b))` on standardised rows.
pub fn svm_primal_objective(rows: &[Vec<f64>], labels: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let hinge: f64 = rows.iter().zip(labels).map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0)).sum();
    0.5 * dot(w, w) + c / rows.len() as f64 * hinge
}

/// Dual coordinate-pair solver with maximal-violating-pair selection.
/// Returns `(w, b)`.
pub fn solve_svm(rows: &[Vec<f64>], labels: &[f64], cfg: &SvmConfig) -> (Vec<f64>, f64) {
    let n = rows.len();
    let upper = cfg.c / n as f64;
    let k: Vec<Vec<f64>> = rows.iter().map(|a| rows.iter().map(|b| dot(a, b)).collect()).collect();
    let q = |i: usize, j: usize| labels[i] * labels[j] * k[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, y: f64| (y > 0.0 && a < upper) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < upper);
    for _ in 0..cfg.max_iterations {
        let (mut i, mut g_max) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut g_min) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -labels[t] * grad[t];
            if in_up(alpha[t], labels[t]) && v > g_max {
                (i, g_max) = (t, v);
            }
            if in_low(alpha[t], labels[t]) && v < g_min {
                (j, g_min) = (t, v);
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < cfg.tolerance {
            break;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if labels[i] != labels[j] {
            let quad = (k[i][i] + k[j][j] + 2.0 * q(i, j)).max(1e-12);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = upper - diff;
                }
            } else if alpha[j] > upper {
                alpha[j] = upper;
                alpha[i] = upper + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * q(i, j)).max(1e-12);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > upper {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = sum - upper;
                }
                if alpha[j] > upper {
                    alpha[j] = upper;
                    alpha[i] = sum - upper;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }
    // offset from free multipliers, else the midpoint of the feasible interval
    let (mut ub, mut lb, mut free_sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = labels[t] * grad[t];
        if alpha[t] >= upper {
            if labels[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if labels[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };
    let d = rows[0].len();
    let w: Vec<f64> = (0..d).map(|f| (0..n).map(|t| alpha[t] * labels[t] * rows[t][f]).sum()).collect();
    (w, -rho)
}

pub fn train_svm(train: &[LabeledFeature], feature_set: FeatureSet, cfg: &SvmConfig) -> Result<LinearSvmModel> {
    check_both_classes(train)?;
    let raw: Vec<Vec<f64>> = train.iter().map(|s| feature_set.extract(&s.features)).collect::<Result<_>>()?;
    let standardizer = Standardizer::fit(&raw);
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();
    let labels: Vec<f64> = train.iter().map(|s| s.label.sign()).collect();
    let (weights, bias) = solve_svm(&rows, &labels, cfg);
    Ok(LinearSvmModel { feature_set, weights, bias, standardizer, c: cfg.c })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf { p_adversarial: f64, count: usize },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaf_probability(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { p_adversarial, .. } => *p_adversarial,
            TreeNode::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.leaf_probability(x)
                } else {
                    right.leaf_probability(x)
                }
            }
        }
    }
}

/// Axis-aligned CART tree on `m1..m4`; `x[f] <= threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub max_depth: usize,
    pub root: TreeNode,
}

impl TreeModel {
    /// Leaf probability of the adversarial class.
    pub fn score(&self, f: &FeatureVector) -> f64 {
        self.root.leaf_probability(&f.moments4())
    }
}

fn gini(adv: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = adv as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

/// Best split as `(feature, threshold, weighted child impurity)`. Features
/// and thresholds are scanned in increasing order; only strict improvements
/// replace the incumbent.
pub fn best_split(rows: &[(Vec<f64>, bool)]) -> Option<(usize, f64, f64)> {
    let n = rows.len();
    let total_adv = rows.iter().filter(|r| r.1).count();
    let parent = gini(total_adv, n);
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..rows.first()?.0.len() {
        let mut order: Vec<&(Vec<f64>, bool)> = rows.iter().collect();
        order.sort_by(|a, b| a.0[f].total_cmp(&b.0[f]));
        let mut left_adv = 0;
        for i in 0..n - 1 {
            left_adv += usize::from(order[i].1);
            let (a, b) = (order[i].0[f], order[i + 1].0[f]);
            if a == b {
                continue;
            }
            let nl = i + 1;
            let impurity = (nl as f64 * gini(left_adv, nl) + (n - nl) as f64 * gini(total_adv - left_adv, n - nl)) / n as f64;
            if impurity < parent - 1e-12 && best.map_or(true, |(_, _, bi)| impurity < bi - 1e-12) {
                best = Some((f, 0.5 * (a + b), impurity));
            }
        }
    }
    best
}

fn grow(rows: Vec<(Vec<f64>, bool)>, depth_left: usize) -> TreeNode {
    let adv = rows.iter().filter(|r| r.1).count();
    let leaf = TreeNode::Leaf { p_adversarial: adv as f64 / rows.len() as f64, count: rows.len() };
    if depth_left == 0 || adv == 0 || adv == rows.len() {
        return leaf;
    }
    match best_split(&rows) {
        None => leaf,
        Some((feature, threshold, _)) => {
            let (l, r): (Vec<_>, Vec<_>) = rows.into_iter().partition(|row| row.0[feature] <= threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(grow(l, depth_left - 1)),
                right: Box::new(grow(r, depth_left - 1)),
            }
        }
    }
}

pub fn train_tree(train: &[LabeledFeature], max_depth: usize) -> Result<TreeModel> {
    check_both_classes(train)?;
    let rows = train.iter().map(|s| (s.features.moments4().to_vec(), s.label.is_adv())).collect();
    Ok(TreeModel { max_depth, root: grow(rows, max_depth) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Detector {
    Stump(StumpModel),
    Svm(LinearSvmModel),
    Tree(TreeModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub svm: SvmConfig,
    pub tree_depth: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { svm: SvmConfig::default(), tree_depth: 4 }
    }
}

impl Detector {
    pub fn train(kind: ClassifierKind, train: &[LabeledFeature], cfg: &DetectorConfig) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Ds => Detector::Stump(train_stump(train)?),
            ClassifierKind::Svm4 => Detector::Svm(train_svm(train, FeatureSet::Moments4, &cfg.svm)?),
            ClassifierKind::Svmf => Detector::Svm(train_svm(train, FeatureSet::FullHist, &cfg.svm)?),
            ClassifierKind::Tree => Detector::Tree(train_tree(train, cfg.tree_depth)?),
        })
    }

    /// Higher means more adversarial.
    pub fn score(&self, f: &FeatureVector) -> Result<f64> {
        match self {
            Detector::Stump(m) => Ok(m.score(f)),
            Detector::Svm(m) => m.score(f),
            Detector::Tree(m) => Ok(m.score(f)),
        }
    }

    fn decision_boundary(&self) -> f64 {
        match self {
            Detector::Tree(_) => 0.5,
            _ => 0.0,
        }
    }

    pub fn predict(&self, f: &FeatureVector) -> Result<Label> {
        Ok(if self.score(f)? > self.decision_boundary() { Label::Adversarial } else { Label::Original })
    }
}

/// Probability that a random adversarial score exceeds a random original
/// score, ties counting one half.
pub fn auc(scores: &[(f64, Label)]) -> Result<f64> {
    let adv: Vec<f64> = scores.iter().filter(|s| s.1.is_adv()).map(|s| s.0).collect();
    let orig: Vec<f64> = scores.iter().filter(|s| !s.1.is_adv()).map(|s| s.0).collect();
    if adv.is_empty() || orig.is_empty() {
        return Err(Error::OneClass);
    }
    let mut wins = 0.0;
    for a in &adv {
        for o in &orig {
            wins += if a > o {
                1.0
            } else if a == o {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (adv.len() * orig.len()) as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_adversarial: usize,
    pub false_adversarial: usize,
    pub true_original: usize,
    pub false_original: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_adversarial + self.false_adversarial + self.true_original + self.false_original
    }

    pub fn accuracy_percent(&self) -> f64 {
        100.0 * (self.true_adversarial + self.true_original) as f64 / self.total() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScore {
    pub accuracy: f64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percent.
    pub accuracy: f64,
    pub auc: f64,
    pub confusion: Confusion,
    /// Each attack's adversarial samples against all originals.
    pub per_attack: BTreeMap<String, AttackScore>,
}

fn score_set(model: &Detector, set: &[&LabeledFeature]) -> Result<(Confusion, f64)> {
    let mut confusion = Confusion::default();
    let mut scores = Vec::with_capacity(set.len());
    for s in set {
        let score = model.score(&s.features)?;
        let predicted = score > model.decision_boundary();
        match (s.label.is_adv(), predicted) {
            (true, true) => confusion.true_adversarial += 1,
            (false, true) => confusion.false_adversarial += 1,
            (false, false) => confusion.true_original += 1,
            (true, false) => confusion.false_original += 1,
        }
        scores.push((score, s.label));
    }
    Ok((confusion, auc(&scores)?))
}

pub fn evaluate(model: &Detector, test: &[LabeledFeature]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty);
    }
    let all: Vec<&LabeledFeature> = test.iter().collect();
    let (confusion, overall_auc) = score_set(model, &all)?;
    let originals: Vec<&LabeledFeature> = test.iter().filter(|s| !s.label.is_adv()).collect();
    let mut attacks: Vec<&str> = test.iter().filter_map(|s| s.attack.as_deref()).collect();
    attacks.sort_unstable();
    attacks.dedup();
    let mut per_attack = BTreeMap::new();
    for attack in attacks {
        let mut subset = originals.clone();
        subset.extend(test.iter().filter(|s| s.label.is_adv() && s.attack.as_deref() == Some(attack)));
        let (c, a) = score_set(model, &subset)?;
        per_attack.insert(attack.to_string(), AttackScore { accuracy: c.accuracy_percent(), auc: a });
    }
    Ok(EvalReport { accuracy: confusion.accuracy_percent(), auc: overall_auc, confusion, per_attack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn fv(m: [f64; 4], u2: f64) -> FeatureVector {
        FeatureVector { m1: m[0], m2: m[1], m3: m[2], m4: m[3], u2, entropy: None, full_hist: None }
    }

    fn sample(id: usize, u2: f64, label: Label) -> LabeledFeature {
        sample_m(id, [u2, 0.0, 0.0, 0.0], u2, label)
    }

    fn sample_m(id: usize, m: [f64; 4], u2: f64, label: Label) -> LabeledFeature {
        LabeledFeature {
            sample_id: format!("s{id}"),
            original_id: format!("o{id}"),
            attack: label.is_adv().then(|| "cw".to_string()),
            label,
            features: fv(m, u2),
        }
    }

    use Label::{Adversarial as A, Original as O};

    #[test]
    fn stump_separates_and_prefers_smaller_threshold() {
        let set = [sample(0, 0.0, O), sample(1, 0.0, O), sample(2, 5.0, A), sample(3, 6.0, A)];
        let m = train_stump(&set).unwrap();
        assert_eq!((m.threshold, m.polarity), (2.5, 1.0));

        let set = [sample(0, 0.0, O), sample(1, 1.0, A), sample(2, 2.0, O), sample(3, 3.0, A)];
        let m = train_stump(&set).unwrap();
        assert_eq!((m.threshold, m.polarity), (0.5, 1.0));
    }

    #[test]
    fn stump_on_constant_feature_reaches_the_prior() {
        let set = [sample(0, 1.0, O), sample(1, 1.0, A), sample(2, 1.0, A)];
        let m = train_stump(&set).unwrap();
        let correct = set.iter().filter(|s| (m.score(&s.features) > 0.0) == s.label.is_adv()).count();
        assert_eq!(correct, 2);
    }

    #[test]
    fn one_class_and_missing_histogram_are_errors() {
        let set = [sample(0, 1.0, O), sample(1, 2.0, O)];
        assert!(matches!(train_stump(&set), Err(Error::OneClass)));
        assert!(matches!(train_tree(&set, 4), Err(Error::OneClass)));
        let set = [sample(0, 1.0, O), sample(1, 2.0, A)];
        let err = Detector::train(ClassifierKind::Svmf, &set, &DetectorConfig::default());
        assert!(matches!(err, Err(Error::Mode(_))));
    }

    fn random_rows(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rows = labels
            .iter()
            .map(|y| (0..d).map(|_| rng.gen_range(-1.0..1.0) + 0.6 * y).collect())
            .collect();
        (rows, labels)
    }

    /// Subgradient descent on the primal with a decaying step, keeping the best iterate.
    fn subgradient_oracle(rows: &[Vec<f64>], labels: &[f64], c: f64) -> f64 {
        let (n, d) = (rows.len(), rows[0].len());
        let (mut w, mut b) = (vec![0.0; d], 0.0);
        let mut best = svm_primal_objective(rows, labels, &w, b, c);
        for t in 0..400_000 {
            let step = 0.5 / (1.0 + t as f64).sqrt();
            let mut gw = w.clone();
            let mut gb = 0.0;
            for (x, y) in rows.iter().zip(labels) {
                if y * (dot(&w, x) + b) < 1.0 {
                    for k in 0..d {
                        gw[k] -= c / n as f64 * y * x[k];
                    }
                    gb -= c / n as f64 * y;
                }
            }
            for k in 0..d {
                w[k] -= step * gw[k];
            }
            b -= step * gb;
            best = best.min(svm_primal_objective(rows, labels, &w, b, c));
        }
        best
    }

    #[test]
    fn svm_objective_matches_subgradient_oracle() {
        let (rows, labels) = random_rows(3, 20, 4);
        let (w, b) = solve_svm(&rows, &labels, &SvmConfig::default());
        let ours = svm_primal_objective(&rows, &labels, &w, b, 1.0);
        let oracle = subgradient_oracle(&rows, &labels, 1.0);
        assert!(ours <= oracle * (1.0 + 1e-3), "ours {ours} oracle {oracle}");
        assert!((ours - oracle).abs() / oracle < 1e-3, "ours {ours} oracle {oracle}");
    }

    #[test]
    fn svm_boundary_is_unchanged_by_duplicating_the_data() {
        let (rows, labels) = random_rows(5, 16, 3);
        let (w1, b1) = solve_svm(&rows, &labels, &SvmConfig::default());
        let rows2: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
        let labels2: Vec<f64> = labels.iter().chain(&labels).copied().collect();
        let (w2, b2) = solve_svm(&rows2, &labels2, &SvmConfig::default());
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-4, "{w1:?} {w2:?}");
        }
        assert!((b1 - b2).abs() < 1e-4);
    }

    #[test]
    fn svm_separates_well_spaced_classes() {
        let set: Vec<LabeledFeature> = (0..20)
            .map(|i| {
                let label = if i % 2 == 0 { A } else { O };
                let c = if label.is_adv() { 3.0 } else { -3.0 };
                sample_m(i, [c + i as f64 * 0.01, 1.0 - c, 0.5 * c, 0.0], 0.0, label)
            })
            .collect();
        let det = Detector::train(ClassifierKind::Svm4, &set, &DetectorConfig::default()).unwrap();
        let report = evaluate(&det, &set).unwrap();
        assert_eq!(report.accuracy, 100.0);
        assert_eq!(report.auc, 1.0);
    }

    fn exhaustive_root_split(rows: &[(Vec<f64>, bool)]) -> Option<(usize, f64)> {
        let n = rows.len() as f64;
        let impurity_of = |part: Vec<&(Vec<f64>, bool)>| {
            let k = part.len() as f64;
            if k == 0.0 {
                return 0.0;
            }
            let p = part.iter().filter(|r| r.1).count() as f64 / k;
            k / n * (1.0 - p * p - (1.0 - p) * (1.0 - p))
        };
        let parent = impurity_of(rows.iter().collect());
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..rows[0].0.len() {
            let mut vals: Vec<f64> = rows.iter().map(|r| r.0[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let imp = impurity_of(rows.iter().filter(|r| r.0[f] <= t).collect())
                    + impurity_of(rows.iter().filter(|r| r.0[f] > t).collect());
                let better = match best {
                    None => imp < parent - 1e-12,
                    Some((_, _, b)) => imp < b - 1e-12,
                };
                if better {
                    best = Some((f, t, imp));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    #[test]
    fn tree_root_split_matches_exhaustive_search() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<(Vec<f64>, bool)> = (0..8)
                .map(|_| ((0..4).map(|_| rng.gen_range(0..6) as f64).collect(), rng.gen_bool(0.5)))
                .collect();
            let ours = best_split(&rows).map(|(f, t, _)| (f, t));
            assert_eq!(ours, exhaustive_root_split(&rows), "seed {seed}");
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[(2.0, A), (1.0, O)]).unwrap(), 1.0);
        assert_eq!(auc(&[(0.0, A), (1.0, O)]).unwrap(), 0.0);
        assert_eq!(auc(&[(1.0, A), (1.0, O), (1.0, O)]).unwrap(), 0.5);
        assert!(matches!(auc(&[(1.0, A)]), Err(Error::OneClass)));
    }

    /// Rank-sum form with averaged ranks for ties.
    fn rank_sum_auc(scores: &[(f64, Label)]) -> f64 {
        let mut sorted: Vec<(f64, Label)> = scores.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut ranks = vec![0.0; sorted.len()];
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
                j += 1;
            }
            for r in &mut ranks[i..=j] {
                *r = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        let n_adv = sorted.iter().filter(|s| s.1.is_adv()).count() as f64;
        let n_orig = sorted.len() as f64 - n_adv;
        let r_adv: f64 = sorted.iter().zip(&ranks).filter(|(s, _)| s.1.is_adv()).map(|(_, r)| r).sum();
        (r_adv - n_adv * (n_adv + 1.0) / 2.0) / (n_adv * n_orig)
    }

    #[test]
    fn split_groups_by_original_and_keeps_seventy_percent() {
        let mut samples = Vec::new();
        for o in 0..500 {
            samples.push(sample(o, 0.0, O));
            let mut adv = sample(o, 1.0, A);
            adv.sample_id = format!("a{o}");
            samples.push(adv);
        }
        let (train, test) = split_70_30(&samples, 9).unwrap();
        let ids = |s: &[LabeledFeature]| s.iter().map(|x| x.original_id.clone()).collect::<std::collections::BTreeSet<_>>();
        assert_eq!(ids(&train).len(), 350);
        assert_eq!(ids(&test).len(), 150);
        assert!(ids(&train).is_disjoint(&ids(&test)));
        assert_eq!(train.len() + test.len(), samples.len());
        assert_eq!(split_70_30(&samples, 9).unwrap().0, train);
        assert!(matches!(split_70_30(&samples[..10], 0), Err(Error::TooFew { .. })));
    }

    #[test]
    fn per_attack_breakdown_uses_all_originals() {
        let mut set = vec![sample(0, 0.0, O), sample(1, 0.1, O), sample(2, 5.0, A), sample(3, 0.05, A)];
        set[3].attack = Some("dr".into());
        let det = Detector::train(ClassifierKind::Ds, &set[..3], &DetectorConfig::default()).unwrap();
        let report = evaluate(&det, &set).unwrap();
        assert_eq!(report.per_attack["cw"].auc, 1.0);
        assert_eq!(report.per_attack["dr"].auc, 0.5);
        assert_eq!(report.confusion.total(), 4);
    }

    #[test]
    fn detector_json_round_trip() {
        let set: Vec<LabeledFeature> = (0..12).map(|i| sample_m(i, [i as f64, (i % 3) as f64, 1.0, 0.0], i as f64, if i > 5 { A } else { O })).collect();
        for kind in [ClassifierKind::Ds, ClassifierKind::Svm4, ClassifierKind::Tree] {
            let det = Detector::train(kind, &set, &DetectorConfig::default()).unwrap();
            let back: Detector = serde_json::from_str(&serde_json::to_string(&det).unwrap()).unwrap();
            assert_eq!(back, det);
        }
    }

    proptest! {
        #[test]
        fn auc_matches_rank_sum(raw in prop::collection::vec((0u8..6, any::<bool>()), 2..30)) {
            let mut scores: Vec<(f64, Label)> = raw.iter().map(|&(s, a)| (s as f64, if a { A } else { O })).collect();
            scores[0].1 = A;
            scores[1].1 = O;
            let ours = auc(&scores).unwrap();
            prop_assert!((ours - rank_sum_auc(&scores)).abs() < 1e-12);
            let flipped: Vec<(f64, Label)> = scores.iter().map(|&(s, l)| (-s, l)).collect();
            prop_assert!((ours + auc(&flipped).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tree_depth_is_bounded(seed in 0u64..1000, depth in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set: Vec<LabeledFeature> = (0..40)
                .map(|i| sample_m(i, [rng.gen(), rng.gen(), rng.gen(), rng.gen()], 0.0, if i % 2 == 0 { A } else { O }))
                .collect();
            let tree = train_tree(&set, depth).unwrap();
            prop_assert!(tree.root.depth() <= depth);
        }

        #[test]
        fn stump_is_no_worse_than_the_prior(raw in prop::collection::vec((0u8..8, any::<bool>()), 2..30)) {
            let mut set: Vec<LabeledFeature> = raw.iter().enumerate().map(|(i, &(u, a))| sample(i, u as f64, if a { A } else { O })).collect();
            set[0].label = A;
            set[1].label = O;
            let m = train_stump(&set).unwrap();
            let correct = set.iter().filter(|s| (m.score(&s.features) > 0.0) == s.label.is_adv()).count();
            let adv = set.iter().filter(|s| s.label.is_adv()).count();
            prop_assert!(correct >= adv.max(set.len() - adv));
        }
    }
}
