//! Small CTC acoustic model: context-stacked log-mel input, tanh dense layers
//! with optional dropout, an optional unidirectional recurrent layer and a
//! softmax output over the alphabet plus blank.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub n_features: usize,
    /// Frames of context on each side of the centre frame.
    pub context: usize,
    pub hidden: usize,
    pub dense_layers: usize,
    pub recurrent: bool,
}

impl Default for ModelGeometry {
    fn default() -> Self {
        Self { n_features: 20, context: 3, hidden: 128, dense_layers: 3, recurrent: false }
    }
}

impl ModelGeometry {
    pub fn input_width(&self) -> usize {
        self.n_features * (2 * self.context + 1)
    }
}

/// Which layers receive dropout. Recurrent internals never do.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutScope {
    #[default]
    DenseOnly,
    /// Also drops units of the recurrent layer's output sequence.
    DenseAndRecurrentOutput,
}

/// One dropout realization: identical spec and input give identical masks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub rate: f64,
    pub seed: u64,
    pub scope: DropoutScope,
}

impl DropoutSpec {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self { rate, seed, scope: DropoutScope::DenseOnly }
    }

    pub fn with_scope(mut self, scope: DropoutScope) -> Self {
        self.scope = scope;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::InvalidParameter(format!("dropout rate {} not in [0, 1)", self.rate)));
        }
        Ok(())
    }
}

/// Inverted-dropout mask source: kept units are scaled by `1 / (1 - p)` so the
/// dropout-off network needs no rescaling.
struct MaskSampler {
    rng: ChaCha8Rng,
    rate: f64,
}

impl MaskSampler {
    fn new(spec: &DropoutSpec) -> Option<Self> {
        (spec.rate > 0.0).then(|| Self { rng: ChaCha8Rng::seed_from_u64(spec.seed), rate: spec.rate })
    }

    fn sample<T: Real>(&mut self, dim: (usize, usize)) -> Array2<T> {
        let keep = T::lit(1.0 / (1.0 - self.rate));
        Array2::from_shape_fn(dim, |_| if self.rng.gen::<f64>() < self.rate { T::zero() } else { keep })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dense<T: Real> {
    /// `inputs x outputs`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Self {
            weights: Array2::from_shape_fn((inputs, outputs), |_| T::lit(dist.sample(rng))),
            bias: Array1::zeros(outputs),
        }
    }

    fn zeros_like(&self) -> Self {
        Self { weights: Array2::zeros(self.weights.dim()), bias: Array1::zeros(self.bias.len()) }
    }

    fn apply(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.weights) + &self.bias
    }
}

/// Elman layer: `h_t = tanh(x_t W + h_{t-1} U + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Recurrent<T: Real> {
    pub input: Array2<T>,
    pub recurrent: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Recurrent<T> {
    fn init(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let input = Dense::<T>::glorot(inputs, hidden, rng).weights;
        // small recurrent weights keep the toy RNN far from saturation at init
        let limit = 0.5 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Self {
            input,
            recurrent: Array2::from_shape_fn((hidden, hidden), |_| T::lit(dist.sample(rng))),
            bias: Array1::zeros(hidden),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            input: Array2::zeros(self.input.dim()),
            recurrent: Array2::zeros(self.recurrent.dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }
}

/// Trainable parameters; also used as the gradient container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Params<T: Real> {
    pub dense: Vec<Dense<T>>,
    pub recurrent: Option<Recurrent<T>>,
    pub output: Dense<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            dense: self.dense.iter().map(Dense::zeros_like).collect(),
            recurrent: self.recurrent.as_ref().map(Recurrent::zeros_like),
            output: self.output.zeros_like(),
        }
    }

    fn arrays(&self) -> Vec<ndarray::ArrayViewD<'_, T>> {
        let mut v = Vec::new();
        for d in &self.dense {
            v.push(d.weights.view().into_dyn());
            v.push(d.bias.view().into_dyn());
        }
        if let Some(r) = &self.recurrent {
            v.push(r.input.view().into_dyn());
            v.push(r.recurrent.view().into_dyn());
            v.push(r.bias.view().into_dyn());
        }
        v.push(self.output.weights.view().into_dyn());
        v.push(self.output.bias.view().into_dyn());
        v
    }

    fn arrays_mut(&mut self) -> Vec<ndarray::ArrayViewMutD<'_, T>> {
        let mut v = Vec::new();
        for d in &mut self.dense {
            v.push(d.weights.view_mut().into_dyn());
            v.push(d.bias.view_mut().into_dyn());
        }
        if let Some(r) = &mut self.recurrent {
            v.push(r.input.view_mut().into_dyn());
            v.push(r.recurrent.view_mut().into_dyn());
            v.push(r.bias.view_mut().into_dyn());
        }
        v.push(self.output.weights.view_mut().into_dyn());
        v.push(self.output.bias.view_mut().into_dyn());
        v
    }

    pub fn norm(&self) -> T {
        self.arrays().iter().map(|a| a.iter().map(|v| v.sq()).fold(T::zero(), |x, y| x + y)).fold(T::zero(), |x, y| x + y).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// `self = self * a + other * b`, elementwise over every parameter.
    pub fn scale_add(&mut self, a: T, other: &Self, b: T) {
        for (mut mine, theirs) in self.arrays_mut().into_iter().zip(other.arrays()) {
            Zip::from(&mut mine).and(&theirs).for_each(|m, &t| *m = *m * a + t * b);
        }
    }

    pub fn scale(&mut self, a: T) {
        for mut arr in self.arrays_mut() {
            arr.mapv_inplace(|v| v * a);
        }
    }

    pub fn count(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    /// Flat copy in a fixed order (dense layers, recurrent, output).
    pub fn to_flat(&self) -> Vec<T> {
        self.arrays().iter().flat_map(|a| a.iter().copied().collect::<Vec<_>>()).collect()
    }
}

/// Row-stochastic CTC posteriors, `frames x (|A| + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CtcPosteriors<T: Real> {
    pub rows: Array2<T>,
}

impl<T: Real> CtcPosteriors<T> {
    pub fn from_logits(logits: &Array2<T>) -> Self {
        let mut rows = logits.clone();
        for mut row in rows.rows_mut() {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        Self { rows }
    }

    pub fn frames(&self) -> usize {
        self.rows.nrows()
    }
}

/// Forward activations kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Tape<T: Real> {
    input: Array2<T>,
    /// Per dense layer: tanh output before the mask, and the mask.
    dense: Vec<(Array2<T>, Option<Array2<T>>)>,
    recurrent: Option<(Array2<T>, Option<Array2<T>>)>,
    /// Input to the output layer.
    last_hidden: Array2<T>,
    pub logits: Array2<T>,
}

impl<T: Real> Tape<T> {
    pub fn posteriors(&self) -> CtcPosteriors<T> {
        CtcPosteriors::from_logits(&self.logits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AcousticModel<T: Real> {
    pub version: u32,
    pub alphabet: Alphabet,
    pub geometry: ModelGeometry,
    /// Dropout rate used while training (`p_tr`).
    pub train_dropout_rate: f64,
    pub feature_mean: Array1<T>,
    pub feature_std: Array1<T>,
    pub params: Params<T>,
}

impl<T: Real> AcousticModel<T> {
    pub fn new(alphabet: Alphabet, geometry: ModelGeometry, train_dropout_rate: f64, seed: u64) -> Result<Self> {
        if geometry.dense_layers == 0 || geometry.hidden == 0 || geometry.n_features == 0 {
            return Err(Error::InvalidParameter(format!("model geometry {geometry:?}")));
        }
        if !(0.0..1.0).contains(&train_dropout_rate) {
            return Err(Error::InvalidParameter(format!("p_tr {train_dropout_rate} not in [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = Vec::with_capacity(geometry.dense_layers);
        let mut width = geometry.input_width();
        for _ in 0..geometry.dense_layers {
            dense.push(Dense::glorot(width, geometry.hidden, &mut rng));
            width = geometry.hidden;
        }
        let recurrent = geometry.recurrent.then(|| Recurrent::init(width, geometry.hidden, &mut rng));
        let output = Dense::glorot(geometry.hidden, alphabet.width(), &mut rng);
        Ok(Self {
            version: CHECKPOINT_VERSION,
            alphabet,
            geometry,
            train_dropout_rate,
            feature_mean: Array1::zeros(geometry.n_features),
            feature_std: Array1::ones(geometry.n_features),
            params: Params { dense, recurrent, output },
        })
    }

    pub fn output_width(&self) -> usize {
        self.params.output.bias.len()
    }

    /// Sets per-feature standardisation from a collection of feature matrices.
    pub fn fit_normalization<'a>(&mut self, features: impl IntoIterator<Item = &'a Array2<T>>) {
        let n = self.geometry.n_features;
        let mut sum = Array1::<f64>::zeros(n);
        let mut sum_sq = Array1::<f64>::zeros(n);
        let mut count = 0usize;
        for f in features {
            for row in f.rows() {
                for (j, v) in row.iter().enumerate() {
                    let v = v.to_f64_lossy();
                    sum[j] += v;
                    sum_sq[j] += v * v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return;
        }
        let c = count as f64;
        for j in 0..n {
            let mean = sum[j] / c;
            let var = (sum_sq[j] / c - mean * mean).max(0.0);
            self.feature_mean[j] = T::lit(mean);
            self.feature_std[j] = T::lit(var.sqrt().max(1e-3));
        }
    }

    fn stack_context(&self, features: &Array2<T>) -> Result<Array2<T>> {
        let g = &self.geometry;
        if features.ncols() != g.n_features {
            return Err(Error::Shape(format!("feature width {} vs model input {}", features.ncols(), g.n_features)));
        }
        if features.nrows() == 0 {
            return Err(Error::Shape("no frames".into()));
        }
        let frames = features.nrows();
        let normed = (features - &self.feature_mean) / &self.feature_std;
        let mut out = Array2::zeros((frames, g.input_width()));
        let c = g.context as isize;
        for t in 0..frames as isize {
            for j in -c..=c {
                let src = t + j;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let off = ((j + c) as usize) * g.n_features;
                out.slice_mut(s![t as usize, off..off + g.n_features]).assign(&normed.row(src as usize));
            }
        }
        Ok(out)
    }

    fn unstack_context(&self, grad: &Array2<T>) -> Array2<T> {
        let g = &self.geometry;
        let frames = grad.nrows();
        let mut out = Array2::zeros((frames, g.n_features));
        let c = g.context as isize;
        for t in 0..frames as isize {
            for j in -c..=c {
                let src = t + j;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let off = ((j + c) as usize) * g.n_features;
                let mut row = out.row_mut(src as usize);
                row += &grad.slice(s![t as usize, off..off + g.n_features]);
            }
        }
        out / &self.feature_std
    }

    pub fn forward_tape(&self, features: &Array2<T>, dropout: Option<&DropoutSpec>) -> Result<Tape<T>> {
        if let Some(d) = dropout {
            d.validate()?;
        }
        let mut masks = dropout.and_then(MaskSampler::new);
        let input = self.stack_context(features)?;
        let frames = input.nrows();
        let mut current = input.clone();
        let mut dense = Vec::with_capacity(self.params.dense.len());
        for layer in &self.params.dense {
            let act = layer.apply(&current).mapv(|v| v.tanh());
            let mask = masks.as_mut().map(|m| m.sample::<T>((frames, act.ncols())));
            current = match &mask {
                Some(m) => &act * m,
                None => act.clone(),
            };
            dense.push((act, mask));
        }
        let recurrent = match &self.params.recurrent {
            Some(r) => {
                let hidden = run_recurrent(r, &current);
                let mask = match (dropout.map(|d| d.scope), masks.as_mut()) {
                    (Some(DropoutScope::DenseAndRecurrentOutput), Some(m)) => Some(m.sample::<T>(hidden.dim())),
                    _ => None,
                };
                current = match &mask {
                    Some(m) => &hidden * m,
                    None => hidden.clone(),
                };
                Some((hidden, mask))
            }
            None => None,
        };
        let logits = self.params.output.apply(&current);
        Ok(Tape { input, dense, recurrent, last_hidden: current, logits })
    }

    pub fn logits(&self, features: &Array2<T>, dropout: Option<&DropoutSpec>) -> Result<Array2<T>> {
        Ok(self.forward_tape(features, dropout)?.logits)
    }

    pub fn forward(&self, features: &Array2<T>, dropout: Option<&DropoutSpec>) -> Result<CtcPosteriors<T>> {
        Ok(CtcPosteriors::from_logits(&self.logits(features, dropout)?))
    }

    /// Backpropagates `dL/dlogits`. Returns parameter gradients when
    /// `want_params` is set and always the gradient on the raw features.
    pub fn backward(&self, tape: &Tape<T>, grad_logits: &Array2<T>, want_params: bool) -> Result<(Option<Params<T>>, Array2<T>)> {
        if grad_logits.dim() != tape.logits.dim() {
            return Err(Error::Shape(format!("logit gradient {:?} vs {:?}", grad_logits.dim(), tape.logits.dim())));
        }
        let mut grads = want_params.then(|| self.params.zeros_like());
        if let Some(g) = grads.as_mut() {
            g.output.weights = tape.last_hidden.t().dot(grad_logits);
            g.output.bias = grad_logits.sum_axis(Axis(0));
        }
        let mut upstream = grad_logits.dot(&self.params.output.weights.t());

        if let (Some(layer), Some((hidden, mask))) = (&self.params.recurrent, &tape.recurrent) {
            if let Some(m) = mask {
                upstream *= m;
            }
            let layer_in = match tape.dense.last() {
                Some((act, Some(m))) => act * m,
                Some((act, None)) => act.clone(),
                None => tape.input.clone(),
            };
            let (d_in, d_layer) = backprop_recurrent(layer, &layer_in, hidden, &upstream, want_params);
            if let (Some(g), Some(dl)) = (grads.as_mut(), d_layer) {
                g.recurrent = Some(dl);
            }
            upstream = d_in;
        }

        for (idx, layer) in self.params.dense.iter().enumerate().rev() {
            let (act, mask) = &tape.dense[idx];
            if let Some(m) = mask {
                upstream *= m;
            }
            Zip::from(&mut upstream).and(act).for_each(|g, &a| *g = *g * (T::one() - a * a));
            if let Some(g) = grads.as_mut() {
                let layer_in = if idx == 0 {
                    tape.input.clone()
                } else {
                    match &tape.dense[idx - 1] {
                        (a, Some(m)) => a * m,
                        (a, None) => a.clone(),
                    }
                };
                g.dense[idx].weights = layer_in.t().dot(&upstream);
                g.dense[idx].bias = upstream.sum_axis(Axis(0));
            }
            upstream = upstream.dot(&layer.weights.t());
        }
        Ok((grads, self.unstack_context(&upstream)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        if model.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidParameter(format!("checkpoint version {} unsupported", model.version)));
        }
        if model.output_width() != model.alphabet.width() || !model.params.is_finite() {
            return Err(Error::Shape("checkpoint inconsistent with its alphabet or not finite".into()));
        }
        Ok(model)
    }
}

fn run_recurrent<T: Real>(layer: &Recurrent<T>, input: &Array2<T>) -> Array2<T> {
    let frames = input.nrows();
    let hidden = layer.bias.len();
    let projected = input.dot(&layer.input) + &layer.bias;
    let mut out = Array2::zeros((frames, hidden));
    let mut prev = Array1::<T>::zeros(hidden);
    for t in 0..frames {
        let pre = &projected.row(t) + &prev.dot(&layer.recurrent);
        let h = pre.mapv(|v| v.tanh());
        out.row_mut(t).assign(&h);
        prev = h;
    }
    out
}

fn backprop_recurrent<T: Real>(
    layer: &Recurrent<T>,
    input: &Array2<T>,
    hidden: &Array2<T>,
    upstream: &Array2<T>,
    want_params: bool,
) -> (Array2<T>, Option<Recurrent<T>>) {
    let frames = input.nrows();
    let width = layer.bias.len();
    let mut d_pre = Array2::<T>::zeros((frames, width));
    let mut carry = Array1::<T>::zeros(width);
    for t in (0..frames).rev() {
        let dh = &upstream.row(t) + &carry;
        let h: ArrayView1<T> = hidden.row(t);
        let dz = Zip::from(&dh).and(&h).map_collect(|&g, &a| g * (T::one() - a * a));
        carry = dz.dot(&layer.recurrent.t());
        d_pre.row_mut(t).assign(&dz);
    }
    let d_in = d_pre.dot(&layer.input.t());
    let grads = want_params.then(|| {
        let mut shifted = Array2::<T>::zeros((frames, width));
        if frames > 1 {
            shifted.slice_mut(s![1.., ..]).assign(&hidden.slice(s![..frames - 1, ..]));
        }
        Recurrent {
            input: input.t().dot(&d_pre),
            recurrent: shifted.t().dot(&d_pre),
            bias: d_pre.sum_axis(Axis(0)),
        }
    });
    (d_in, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_geometry(recurrent: bool) -> ModelGeometry {
        ModelGeometry { n_features: 4, context: 1, hidden: 10, dense_layers: 2, recurrent }
    }

    fn model(recurrent: bool) -> AcousticModel<f64> {
        AcousticModel::new(Alphabet::new("ab").unwrap(), small_geometry(recurrent), 0.05, 7).unwrap()
    }

    fn features(frames: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((frames, 4), |_| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn rows_are_stochastic_under_any_dropout() {
        let m = model(true);
        let f = features(9, 1);
        for spec in [None, Some(DropoutSpec::new(0.5, 3)), Some(DropoutSpec::new(0.9, 4).with_scope(DropoutScope::DenseAndRecurrentOutput))] {
            let post = m.forward(&f, spec.as_ref()).unwrap();
            assert_eq!(post.rows.dim(), (9, 3));
            for row in post.rows.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn zero_rate_equals_off() {
        let m = model(false);
        let f = features(6, 2);
        let off = m.forward(&f, None).unwrap();
        for seed in [0, 1, 99] {
            assert_eq!(m.forward(&f, Some(&DropoutSpec::new(0.0, seed))).unwrap(), off);
        }
    }

    #[test]
    fn same_seed_same_output_and_high_rate_differs() {
        let m = model(false);
        let f = features(6, 2);
        let spec = DropoutSpec::new(0.99, 42);
        assert_eq!(m.forward(&f, Some(&spec)).unwrap(), m.forward(&f, Some(&spec)).unwrap());
        assert_ne!(m.forward(&f, Some(&spec)).unwrap(), m.forward(&f, None).unwrap());
    }

    #[test]
    fn invalid_rate_and_shape() {
        let m = model(false);
        assert!(m.forward(&features(3, 0), Some(&DropoutSpec::new(1.0, 0))).is_err());
        assert!(matches!(m.forward(&Array2::zeros((3, 5)), None), Err(Error::Shape(_))));
    }

    fn check_gradients(recurrent: bool, dropout: Option<DropoutSpec>) {
        let m = model(recurrent);
        let f = features(7, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = Array2::from_shape_fn((7, 3), |_| rng.gen_range(-1.0..1.0));
        let objective = |m: &AcousticModel<f64>, f: &Array2<f64>| (m.logits(f, dropout.as_ref()).unwrap() * &w).sum();
        let tape = m.forward_tape(&f, dropout.as_ref()).unwrap();
        let (grads, d_feat) = m.backward(&tape, &w, true).unwrap();
        let grads = grads.unwrap();
        let h = 1e-6;
        for i in 0..f.len() {
            let (r, c) = (i / 4, i % 4);
            let mut fp = f.clone();
            let mut fm = f.clone();
            fp[(r, c)] += h;
            fm[(r, c)] -= h;
            let fd = (objective(&m, &fp) - objective(&m, &fm)) / (2.0 * h);
            assert!((fd - d_feat[(r, c)]).abs() < 1e-6 * fd.abs().max(1.0), "feature {i}: {fd} vs {}", d_feat[(r, c)]);
        }
        let flat = grads.to_flat();
        let n = m.params.count();
        for idx in (0..n).step_by(7) {
            let perturb = |delta: f64| {
                let mut p = m.clone();
                let mut k = 0;
                for mut arr in p.params.arrays_mut() {
                    for v in arr.iter_mut() {
                        if k == idx {
                            *v += delta;
                        }
                        k += 1;
                    }
                }
                objective(&p, &f)
            };
            let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
            assert!((fd - flat[idx]).abs() < 1e-6 * fd.abs().max(1.0), "param {idx}: {fd} vs {}", flat[idx]);
        }
    }

    #[test]
    fn gradients_dense() {
        check_gradients(false, None);
    }

    #[test]
    fn gradients_recurrent_with_dropout() {
        check_gradients(true, Some(DropoutSpec::new(0.3, 5).with_scope(DropoutScope::DenseAndRecurrentOutput)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = model(true);
        let json = m.to_json().unwrap();
        assert_eq!(AcousticModel::<f64>::from_json(&json).unwrap(), m);
        let mut bad: serde_json::Value = serde_json::from_str(&json).unwrap();
        bad["version"] = serde_json::json!(99);
        assert!(AcousticModel::<f64>::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn f32_forward() {
        let m = AcousticModel::<f32>::new(Alphabet::new("ab").unwrap(), small_geometry(true), 0.05, 7).unwrap();
        let f = features(5, 3).mapv(|v| v as f32);
        let post = m.forward(&f, Some(&DropoutSpec::new(0.1, 1))).unwrap();
        for row in post.rows.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-5);
        }
    }
}
