//! Fully connected ReLU network with a softmax head, entropy penalty and Adam.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, E2mError, Result};
use crate::geometry::WeightVector;
use crate::scalar::{dot, Real};

/// Default entropy offset `δ`.
pub const ENTROPY_DELTA: f64 = 1e-10;

/// Network parameters, stored flat. Layer `l` maps `dims[l] → dims[l+1]`
/// through a row-major `dims[l+1] × dims[l]` weight block followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<T> {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate values of a forward pass, kept for backprop.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    /// Layer inputs: `x` followed by each hidden activation after dropout.
    inputs: Vec<Vec<T>>,
    /// Dropout scale per hidden unit (`0` or `1/(1−rate)`); empty in eval mode.
    masks: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T> ForwardCache<T> {
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

fn layout(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut at = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        at += w[0] * w[1] + w[1];
        offsets.push(at);
    }
    offsets
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 3 {
        return Err(invalid("the network needs at least one hidden layer"));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(invalid(format!("layer {i} has width 0")));
    }
    Ok(())
}

impl<T: Real> MlpParams<T> {
    /// He-scaled Gaussian weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        check_dims(dims)?;
        let offsets = layout(dims);
        let mut data = vec![T::zero(); *offsets.last().expect("non-empty layout")];
        for (l, w) in dims.windows(2).enumerate() {
            let sd = (2.0 / w[0] as f64).sqrt();
            let start = offsets[l];
            for v in &mut data[start..start + w[0] * w[1]] {
                let z: f64 = StandardNormal.sample(rng);
                *v = T::lit(sd * z);
            }
        }
        Ok(Self { dims: dims.to_vec(), offsets, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let offsets = layout(dims);
        let data = vec![T::zero(); *offsets.last().expect("non-empty layout")];
        Ok(Self { dims: dims.to_vec(), offsets, data })
    }

    /// Rebuilds from per-layer row-major weight blocks and bias vectors.
    pub fn from_layers(dims: &[usize], weights: &[Vec<T>], biases: &[Vec<T>]) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(dim(format!("{layers} layers but {} weight and {} bias blocks", weights.len(), biases.len())));
        }
        let mut data = Vec::new();
        for (l, w) in dims.windows(2).enumerate() {
            if weights[l].len() != w[0] * w[1] || biases[l].len() != w[1] {
                return Err(dim(format!("layer {l} blocks do not match {}→{}", w[0], w[1])));
            }
            data.extend_from_slice(&weights[l]);
            data.extend_from_slice(&biases[l]);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite network parameter"));
        }
        Ok(Self { dims: dims.to_vec(), offsets: layout(dims), data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("checked dims")
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn weight(&self, l: usize) -> &[T] {
        let s = self.offsets[l];
        &self.data[s..s + self.dims[l] * self.dims[l + 1]]
    }

    pub fn bias(&self, l: usize) -> &[T] {
        let s = self.offsets[l] + self.dims[l] * self.dims[l + 1];
        &self.data[s..self.offsets[l + 1]]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [T] {
        let s = self.offsets[l];
        let e = s + self.dims[l] * self.dims[l + 1];
        &mut self.data[s..e]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [T] {
        let s = self.offsets[l] + self.dims[l] * self.dims[l + 1];
        let e = self.offsets[l + 1];
        &mut self.data[s..e]
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        MlpParams {
            dims: self.dims.clone(),
            offsets: self.offsets.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }

    fn affine(&self, l: usize, input: &[T]) -> Vec<T> {
        let w = self.weight(l);
        let n_in = self.dims[l];
        self.bias(l)
            .iter()
            .enumerate()
            .map(|(j, &b)| b + dot(&w[j * n_in..(j + 1) * n_in], input))
            .collect()
    }

    /// Forward pass. Train mode draws inverted-dropout masks from `rng` for
    /// each hidden layer; eval mode is deterministic and ignores `rng`.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[T], mode: Mode, dropout: f64, rng: &mut R) -> Result<(WeightVector<T>, ForwardCache<T>)> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(invalid(format!("dropout rate {dropout} outside [0, 1)")));
        }
        let masking = (mode == Mode::Train && dropout > 0.0).then_some((dropout, rng));
        self.pass(x, masking)
    }

    /// Deterministic weights for prediction.
    pub fn weights_eval(&self, x: &[T]) -> Result<WeightVector<T>> {
        Ok(self.pass::<crate::rng::StreamRng>(x, None)?.0)
    }

    fn pass<R: Rng + ?Sized>(&self, x: &[T], mut masking: Option<(f64, &mut R)>) -> Result<(WeightVector<T>, ForwardCache<T>)> {
        if x.len() != self.input_dim() {
            return Err(dim(format!("input has {} features, network expects {}", x.len(), self.input_dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite input"));
        }
        let hidden = self.layers() - 1;
        let mut inputs = Vec::with_capacity(self.layers());
        let mut masks = Vec::with_capacity(hidden);
        inputs.push(x.to_vec());
        for l in 0..hidden {
            let mut a = self.affine(l, &inputs[l]);
            for v in a.iter_mut() {
                *v = v.max(T::zero());
            }
            if let Some((rate, rng)) = masking.as_mut() {
                let keep = 1.0 - *rate;
                let scale = T::lit(1.0 / keep);
                let mask: Vec<T> = (0..a.len())
                    .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                    .collect();
                for (v, &m) in a.iter_mut().zip(&mask) {
                    *v *= m;
                }
                masks.push(mask);
            }
            inputs.push(a);
        }
        let logits = self.affine(hidden, &inputs[hidden]);
        let w = softmax(&logits);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite softmax output"));
        }
        let cache = ForwardCache { inputs, masks, weights: w.clone() };
        Ok((WeightVector::from_softmax(w), cache))
    }

    /// Adds `∂/∂θ` of a loss with `∂loss/∂w = upstream` into `grads`.
    pub fn backprop_into(&self, cache: &ForwardCache<T>, upstream: &[T], grads: &mut [T]) -> Result<()> {
        let layers = self.layers();
        if cache.inputs.len() != layers || upstream.len() != self.output_dim() || grads.len() != self.len() {
            return Err(dim("forward cache, upstream gradient or gradient buffer does not match the network"));
        }
        if !cache.masks.is_empty() && cache.masks.len() != layers - 1 {
            return Err(dim("dropout masks do not match the network"));
        }
        let w = &cache.weights;
        let wg = dot(w, upstream);
        let mut delta: Vec<T> = w.iter().zip(upstream).map(|(&wi, &gi)| wi * (gi - wg)).collect();
        for l in (0..layers).rev() {
            let n_in = self.dims[l];
            let input = &cache.inputs[l];
            let start = self.offsets[l];
            let (gw, gb) = grads[start..self.offsets[l + 1]].split_at_mut(n_in * self.dims[l + 1]);
            for (j, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                gb[j] += d;
                for (g, &a) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let wl = self.weight(l);
            let mut prev = vec![T::zero(); n_in];
            for (j, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                for (p, &wv) in prev.iter_mut().zip(&wl[j * n_in..(j + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            // `input` is the post-ReLU, post-dropout activation of layer l-1:
            // it is positive exactly where both the ReLU and the mask pass.
            let mask = cache.masks.get(l - 1);
            for (k, p) in prev.iter_mut().enumerate() {
                if input[k] > T::zero() {
                    if let Some(m) = mask {
                        *p *= m[k];
                    }
                } else {
                    *p = T::zero();
                }
            }
            delta = prev;
        }
        Ok(())
    }

    pub fn backprop(&self, cache: &ForwardCache<T>, upstream: &[T]) -> Result<Vec<T>> {
        let mut g = vec![T::zero(); self.len()];
        self.backprop_into(cache, upstream, &mut g)?;
        Ok(g)
    }
}

/// Max-subtracted softmax, renormalized.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut w: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let s: T = w.iter().copied().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let s: T = w.iter().copied().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// `H(w) = −Σ wᵢ log(wᵢ + δ)`
pub fn entropy<T: Real>(w: &[T], delta: T) -> T {
    -w.iter().map(|&wi| wi * (wi + delta).ln()).sum::<T>()
}

/// `∂H/∂wᵢ = −log(wᵢ + δ) − wᵢ/(wᵢ + δ)`
pub fn entropy_grad<T: Real>(w: &[T], delta: T) -> Vec<T> {
    w.iter().map(|&wi| -(wi + delta).ln() - wi / (wi + delta)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    k: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(cfg: AdamConfig, n: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return Err(invalid("Adam betas must lie in [0, 1)"));
        }
        if !(cfg.lr > 0.0) || !(cfg.eps > 0.0) {
            return Err(invalid("Adam learning rate and epsilon must be positive"));
        }
        Ok(Self { cfg, m: vec![T::zero(); n], v: vec![T::zero(); n], k: 0 })
    }

    pub fn steps(&self) -> u64 {
        self.k
    }

    pub fn moments(&self) -> (&[T], &[T]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(dim(format!("{} parameters, {} gradients, state of {}", params.len(), grads.len(), self.m.len())));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(E2mError::Invalid(format!("non-finite gradient at parameter {i}")));
        }
        self.k += 1;
        let b1 = T::lit(self.cfg.beta1);
        let b2 = T::lit(self.cfg.beta2);
        let c1 = T::one() / (T::one() - T::lit(self.cfg.beta1.powi(self.k.min(i32::MAX as u64) as i32)));
        let c2 = T::one() / (T::one() - T::lit(self.cfg.beta2.powi(self.k.min(i32::MAX as u64) as i32)));
        let lr = T::lit(self.cfg.lr);
        let eps = T::lit(self.cfg.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mh = *m * c1;
            let vh = *v * c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, uniform_simplex};

    fn net(dims: &[usize], seed: u64) -> MlpParams<f64> {
        MlpParams::init(dims, &mut substream(seed, "init", 0)).unwrap()
    }

    #[test]
    fn init_is_seeded_and_needs_hidden_layers() {
        assert_eq!(net(&[3, 4, 2], 1), net(&[3, 4, 2], 1));
        assert_ne!(net(&[3, 4, 2], 1), net(&[3, 4, 2], 2));
        assert!(MlpParams::<f64>::init(&[3, 2], &mut substream(0, "init", 0)).is_err());
        assert!(MlpParams::<f64>::init(&[3, 0, 2], &mut substream(0, "init", 0)).is_err());
        let p = net(&[3, 4, 2], 1);
        assert!(p.bias(0).iter().chain(p.bias(1)).all(|&b| b == 0.0));
    }

    #[test]
    fn he_scale() {
        let p = net(&[8, 2000, 1], 3);
        let w = p.weight(0);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        assert!((sd - 0.5).abs() < 0.1, "{sd}");
    }

    #[test]
    fn softmax_head_examples() {
        let mut p = net(&[2, 3, 4], 1);
        p.weight_mut(1).fill(0.0);
        let (w, _) = p.forward(&[0.3, -1.0], Mode::Eval, 0.0, &mut rand::rng()).unwrap();
        assert!(w.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let s = softmax(&[0.0, 3f64.ln()]);
        assert!((s[0] - 0.25).abs() < 1e-15 && (s[1] - 0.75).abs() < 1e-15);
        let s = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12 && s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn eval_is_deterministic_and_rejects_bad_input() {
        let p = net(&[3, 5, 5, 4], 2);
        let x = [0.1, 0.2, -0.3];
        assert_eq!(p.weights_eval(&x).unwrap(), p.weights_eval(&x).unwrap());
        assert!(p.weights_eval(&[f64::NAN, 0.0, 0.0]).is_err());
        assert!(p.weights_eval(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let d = ENTROPY_DELTA;
        assert!((entropy(&[1.0, 0.0, 0.0], d) + (1.0 + d).ln()).abs() < 1e-20);
        assert!((entropy(&[0.25; 4], d) - 4f64.ln()).abs() < 1e-8);
        let g = entropy_grad(&[0.5, 0.5], d);
        assert!(g.iter().all(|&v| (v - (-(0.5f64).ln() - 1.0)).abs() < 1e-8));
        assert!((g[0] + 0.306853).abs() < 1e-6);
    }

    #[test]
    fn entropy_grad_matches_finite_differences() {
        let mut rng = substream(4, "ent", 0);
        for _ in 0..50 {
            let w = uniform_simplex::<f64, _>(5, &mut rng);
            let g = entropy_grad(&w, ENTROPY_DELTA);
            for i in 0..5 {
                let h = 1e-7 * w[i].max(1e-3);
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let fd = (entropy(&wp, ENTROPY_DELTA) - entropy(&wm, ENTROPY_DELTA)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn backprop_annihilates_constant_upstream() {
        let p = net(&[3, 6, 4], 5);
        let (_, cache) = p.forward(&[0.5, -0.2, 1.0], Mode::Train, 0.3, &mut substream(1, "dropout", 0)).unwrap();
        let g = p.backprop(&cache, &[0.0; 4]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let g = p.backprop(&cache, &[2.5; 4]).unwrap();
        assert!(g.iter().all(|&v| v.abs() < 1e-14));
    }

    /// Central differences of `⟨c, w_θ(x)⟩` with the dropout mask held fixed.
    #[test]
    fn backprop_matches_finite_differences() {
        let dims = [3, 5, 6, 4];
        let p = net(&dims, 6);
        let x = [0.4, -0.7, 1.1];
        let c = [0.3, -1.2, 0.8, 2.0];
        for &(mode, rate) in &[(Mode::Eval, 0.0), (Mode::Train, 0.3)] {
            let (_, cache) = p.forward(&x, mode, rate, &mut substream(9, "dropout", 0)).unwrap();
            let g = p.backprop(&cache, &c).unwrap();
            let f = |q: &MlpParams<f64>| -> f64 {
                let (w, _) = q.forward(&x, mode, rate, &mut substream(9, "dropout", 0)).unwrap();
                dot(w.as_slice(), &c)
            };
            for k in 0..p.len() {
                let h = 1e-6;
                let mut qp = p.clone();
                let mut qm = p.clone();
                qp.as_mut_slice()[k] += h;
                qm.as_mut_slice()[k] -= h;
                let fd = (f(&qp) - f(&qm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-7 * fd.abs().max(1.0), "param {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn dropout_preserves_expected_activation() {
        let p = net(&[2, 3, 2], 7);
        let x = [0.9, 0.4];
        let eval = p.affine(0, &x).into_iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
        let mut rng = substream(8, "dropout", 0);
        let draws = 100_000;
        let mut acc = vec![0.0; 3];
        for _ in 0..draws {
            let (_, cache) = p.forward(&x, Mode::Train, 0.3, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(&cache.inputs[1]) {
                *a += v;
            }
        }
        for (a, e) in acc.iter().zip(&eval) {
            if *e > 0.0 {
                assert!((a / draws as f64 - e).abs() < 0.01 * e, "{} vs {e}", a / draws as f64);
            }
        }
    }

    #[test]
    fn adam_examples() {
        let mut st = AdamState::<f64>::new(AdamConfig::with_lr(0.1), 1).unwrap();
        let mut th = [0.0];
        st.step(&mut th, &[1.0]).unwrap();
        assert!((th[0] + 0.1).abs() < 1e-7);
        let mut st = AdamState::<f64>::new(AdamConfig::default(), 3).unwrap();
        let mut th = [1.0, 2.0, 3.0];
        for _ in 0..10 {
            st.step(&mut th, &[0.0; 3]).unwrap();
        }
        assert_eq!(th, [1.0, 2.0, 3.0]);
        assert!(st.step(&mut th, &[f64::NAN, 0.0, 0.0]).is_err());
        assert!(AdamState::<f64>::new(AdamConfig { beta2: 1.0, ..Default::default() }, 1).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut st = AdamState::<f64>::new(AdamConfig::default(), 2).unwrap();
            let mut th = [0.5, -0.5];
            for k in 0..20 {
                st.step(&mut th, &[(k as f64).sin(), (k as f64).cos()]).unwrap();
            }
            (th, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        assert_eq!(sa, sb);
    }

    #[test]
    fn layer_round_trip() {
        let p = net(&[3, 4, 2], 1);
        let w: Vec<Vec<f64>> = (0..2).map(|l| p.weight(l).to_vec()).collect();
        let b: Vec<Vec<f64>> = (0..2).map(|l| p.bias(l).to_vec()).collect();
        assert_eq!(MlpParams::from_layers(&[3, 4, 2], &w, &b).unwrap(), p);
        assert!(MlpParams::from_layers(&[3, 5, 2], &w, &b).is_err());
    }
}
