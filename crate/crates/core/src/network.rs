//! Feed-forward networks with tanh or sine activations.
//!
//! Parameters live in one flat vector: for each layer in order, the weight
//! matrix row-major (`N_l x N_{l-1}`) followed by the bias vector.

use crate::autodiff::{unary_vjp, BatchOp, Jet2, Scalar, Unary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid layer widths: {0}")]
    InvalidWidths(String),
    #[error("expected {expected} inputs, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParamLength { expected: usize, got: usize },
    #[error("network output is not finite")]
    NonFiniteResult,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// `sin(omega0 z)` in every hidden layer.
    Sine,
}

pub const DEFAULT_OMEGA0: f64 = 30.0;

/// Layer widths and activation; parameters are held separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    widths: Vec<usize>,
    activation: Activation,
    omega0: f64,
}

impl Architecture {
    /// `widths = [n_in, N_1, ..., N_L, 1]` with at least one hidden layer.
    pub fn new(widths: Vec<usize>, activation: Activation, omega0: f64) -> Result<Self, NetworkError> {
        if widths.len() < 3 {
            return Err(NetworkError::InvalidWidths(format!("need input, hidden and output layers, got {widths:?}")));
        }
        if widths.contains(&0) {
            return Err(NetworkError::InvalidWidths(format!("zero width in {widths:?}")));
        }
        if *widths.last().expect("non-empty") != 1 {
            return Err(NetworkError::InvalidWidths(format!("output width must be 1, got {widths:?}")));
        }
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(NetworkError::InvalidWidths(format!("omega0 must be positive, got {omega0}")));
        }
        Ok(Architecture { widths, activation, omega0 })
    }

    pub fn tanh(widths: &[usize]) -> Result<Self, NetworkError> {
        Architecture::new(widths.to_vec(), Activation::Tanh, DEFAULT_OMEGA0)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn n_in(&self) -> usize {
        self.widths[0]
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Offsets of `W_l` and `b_l` for layer `l` (0-based, mapping `widths[l]` to `widths[l+1]`).
    pub fn offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.widths[..=l].windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        (start, start + self.widths[l + 1] * self.widths[l])
    }

    fn unary(&self) -> Unary {
        match self.activation {
            Activation::Tanh => Unary::Tanh,
            Activation::Sine => Unary::ScaledSin(self.omega0),
        }
    }

    fn sigma<S: Scalar>(&self, z: S) -> S {
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Sine => z.scale(self.omega0).sin(),
        }
    }

    /// Seeded initialization with ChaCha8 (`seed_from_u64`), drawing weights layer by layer, row-major.
    ///
    /// Tanh: Glorot uniform `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`.
    /// Sine: first layer `U(-1/n_in, 1/n_in)`, later layers `U(-sqrt(6/fan_in)/omega0, +)`.
    /// Biases start at zero.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.n_params()];
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let a = match (self.activation, l) {
                (Activation::Tanh, _) => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                (Activation::Sine, 0) => 1.0 / fan_in as f64,
                (Activation::Sine, _) => (6.0 / fan_in as f64).sqrt() / self.omega0,
            };
            let (w0, _) = self.offsets(l);
            for w in &mut params[w0..w0 + fan_in * fan_out] {
                *w = rng.random_range(-a..a);
            }
        }
        params
    }

    pub fn check_params(&self, params: &[f64]) -> Result<(), NetworkError> {
        if params.len() != self.n_params() {
            return Err(NetworkError::ParamLength { expected: self.n_params(), got: params.len() });
        }
        Ok(())
    }

    /// Scalar output for one input vector over any scalar algebra.
    pub fn forward<S: Scalar>(&self, params: &[f64], input: &[S]) -> Result<S, NetworkError> {
        if input.len() != self.n_in() {
            return Err(NetworkError::InputLength { expected: self.n_in(), got: input.len() });
        }
        self.check_params(params)?;
        let mut a: Vec<S> = input.to_vec();
        for l in 0..self.n_layers() {
            let (m, n) = (self.widths[l], self.widths[l + 1]);
            let (w0, b0) = self.offsets(l);
            let last = l + 1 == self.n_layers();
            a = (0..n)
                .map(|i| {
                    let row = &params[w0 + i * m..w0 + (i + 1) * m];
                    let z = row.iter().zip(&a).fold(S::constant(params[b0 + i]), |acc, (&w, &x)| acc + x.scale(w));
                    if last {
                        z
                    } else {
                        self.sigma(z)
                    }
                })
                .collect();
        }
        let out = a[0];
        if out.is_finite() {
            Ok(out)
        } else {
            Err(NetworkError::NonFiniteResult)
        }
    }
}

/// An architecture together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub arch: Architecture,
    pub params: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    widths: Vec<usize>,
    activation: Activation,
    omega0: f64,
    params: Vec<f64>,
}

impl Mlp {
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let params = arch.init(seed);
        Mlp { arch, params }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, NetworkError> {
        arch.check_params(&params)?;
        Ok(Mlp { arch, params })
    }

    pub fn forward<S: Scalar>(&self, input: &[S]) -> Result<S, NetworkError> {
        self.arch.forward(&self.params, input)
    }

    pub fn weight(&self, l: usize, i: usize, j: usize) -> f64 {
        self.params[self.arch.offsets(l).0 + i * self.arch.widths[l] + j]
    }

    pub fn set_weight(&mut self, l: usize, i: usize, j: usize, v: f64) {
        let k = self.arch.offsets(l).0 + i * self.arch.widths[l] + j;
        self.params[k] = v;
    }

    pub fn bias(&self, l: usize, i: usize) -> f64 {
        self.params[self.arch.offsets(l).1 + i]
    }

    pub fn set_bias(&mut self, l: usize, i: usize, v: f64) {
        let k = self.arch.offsets(l).1 + i;
        self.params[k] = v;
    }

    /// JSON `{widths, activation, omega0, params}`; floats use shortest round-trip form.
    pub fn to_json(&self) -> String {
        let c = Checkpoint {
            widths: self.arch.widths.clone(),
            activation: self.arch.activation,
            omega0: self.arch.omega0,
            params: self.params.clone(),
        };
        serde_json::to_string_pretty(&c).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NetworkError> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        let arch = Architecture::new(c.widths, c.activation, c.omega0)?;
        Mlp::from_params(arch, c.params)
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    debug_assert!(a.0.len() >= m * k && b.0.len() >= k * n);
    // SAFETY: the stride pairs describe in-bounds row- or column-major views of
    // slices whose lengths are checked above; `c` is a distinct dense buffer.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.0.as_ptr(), a.1, a.2, b.0.as_ptr(), b.1, b.2, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// One network applied to `K` jet inputs at once.
///
/// Each layer's activations are stored as a `width x 6K` matrix: six blocks of
/// `K` columns holding the value, gradient and Hessian components, so the affine
/// map of every component is a single matrix product. A values-only batch keeps
/// just the first block; its outputs have zero derivatives.
pub struct NetworkBatch<'a> {
    arch: &'a Architecture,
    params: &'a [f64],
    k: usize,
    /// Jet components carried: 6, or 1 for values only.
    comps: usize,
    /// Layer inputs `A_0 .. A_{L-1}`.
    acts: Vec<Vec<f64>>,
    /// Hidden pre-activations `Z_1 .. Z_{L-1}`.
    pre: Vec<Vec<f64>>,
    outputs: Vec<Jet2>,
}

impl<'a> NetworkBatch<'a> {
    /// `inputs` holds `n_in` consecutive jets per evaluation.
    pub fn new(arch: &'a Architecture, params: &'a [f64], inputs: &[Jet2]) -> Result<Self, NetworkError> {
        Self::with_components(arch, params, inputs, 6)
    }

    /// Like [`NetworkBatch::new`] but propagating only values; input derivatives are ignored.
    pub fn values(arch: &'a Architecture, params: &'a [f64], inputs: &[Jet2]) -> Result<Self, NetworkError> {
        Self::with_components(arch, params, inputs, 1)
    }

    fn with_components(arch: &'a Architecture, params: &'a [f64], inputs: &[Jet2], comps: usize) -> Result<Self, NetworkError> {
        arch.check_params(params)?;
        let n_in = arch.n_in();
        if inputs.len() % n_in != 0 {
            return Err(NetworkError::InputLength { expected: n_in, got: inputs.len() % n_in });
        }
        let k = inputs.len() / n_in;
        let cols = comps * k;
        let mut a0 = vec![0.0; n_in * cols];
        for (kk, chunk) in inputs.chunks_exact(n_in).enumerate() {
            for (r, j) in chunk.iter().enumerate() {
                for (c, v) in j.to_array().into_iter().take(comps).enumerate() {
                    a0[r * cols + c * k + kk] = v;
                }
            }
        }
        let mut acts = vec![a0];
        let mut pre = Vec::new();
        let mut out = Vec::new();
        let unary = arch.unary();
        for l in 0..arch.n_layers() {
            let (m, n) = (arch.widths[l], arch.widths[l + 1]);
            let (w0, b0) = arch.offsets(l);
            let mut z = vec![0.0; n * cols];
            gemm(n, m, cols, (&params[w0..w0 + n * m], m as isize, 1), (&acts[l], cols as isize, 1), 0.0, &mut z);
            for i in 0..n {
                let b = params[b0 + i];
                for v in &mut z[i * cols..i * cols + k] {
                    *v += b;
                }
            }
            if l + 1 == arch.n_layers() {
                out = z;
            } else {
                let mut a = vec![0.0; n * cols];
                if comps == 1 {
                    for (av, zv) in a.iter_mut().zip(&z) {
                        *av = unary.derivs(*zv)[0];
                    }
                }
                for i in (0..n).filter(|_| comps == 6) {
                    let zr = &z[i * cols..(i + 1) * cols];
                    let ar = &mut a[i * cols..(i + 1) * cols];
                    for kk in 0..k {
                        let [f0, f1, f2, _] = unary.derivs(zr[kk]);
                        let (gx, gy) = (zr[k + kk], zr[2 * k + kk]);
                        ar[kk] = f0;
                        ar[k + kk] = f1 * gx;
                        ar[2 * k + kk] = f1 * gy;
                        ar[3 * k + kk] = f2 * gx * gx + f1 * zr[3 * k + kk];
                        ar[4 * k + kk] = f2 * gx * gy + f1 * zr[4 * k + kk];
                        ar[5 * k + kk] = f2 * gy * gy + f1 * zr[5 * k + kk];
                    }
                }
                pre.push(z);
                acts.push(a);
            }
        }
        let outputs = (0..k).map(|kk| Jet2::from_array(std::array::from_fn(|c| if c < comps { out[c * k + kk] } else { 0.0 }))).collect();
        Ok(NetworkBatch { arch, params, k, comps, acts, pre, outputs })
    }
}

impl BatchOp for NetworkBatch<'_> {
    fn outputs(&self) -> &[Jet2] {
        &self.outputs
    }

    fn backward(&self, out_adj: &[Jet2], grad: &mut [f64]) {
        let (arch, k, comps) = (self.arch, self.k, self.comps);
        let cols = comps * k;
        let unary = arch.unary();
        let mut g = vec![0.0; cols];
        for (kk, a) in out_adj.iter().enumerate() {
            for (c, v) in a.to_array().into_iter().take(comps).enumerate() {
                g[c * k + kk] = v;
            }
        }
        for l in (0..arch.n_layers()).rev() {
            let (m, n) = (arch.widths[l], arch.widths[l + 1]);
            let (w0, b0) = arch.offsets(l);
            // dW += G A^T
            gemm(n, cols, m, (&g, cols as isize, 1), (&self.acts[l], 1, cols as isize), 1.0, &mut grad[w0..w0 + n * m]);
            for i in 0..n {
                grad[b0 + i] += g[i * cols..i * cols + k].iter().sum::<f64>();
            }
            if l == 0 {
                break;
            }
            // Abar = W^T G, then through the activation of layer l.
            let mut abar = vec![0.0; m * cols];
            gemm(m, n, cols, (&self.params[w0..w0 + n * m], 1, m as isize), (&g, cols as isize, 1), 0.0, &mut abar);
            let z = &self.pre[l - 1];
            if comps == 1 {
                for (bv, zv) in abar.iter_mut().zip(z) {
                    *bv *= unary.derivs(*zv)[1];
                }
            }
            for i in (0..m).filter(|_| comps == 6) {
                let zr = &z[i * cols..(i + 1) * cols];
                let br = &mut abar[i * cols..(i + 1) * cols];
                for kk in 0..k {
                    let zj = Jet2::from_array(std::array::from_fn(|c| zr[c * k + kk]));
                    let wj = Jet2::from_array(std::array::from_fn(|c| br[c * k + kk]));
                    let r = unary_vjp(wj, zj, unary.derivs(zj.v)).to_array();
                    for c in 0..6 {
                        br[c * k + kk] = r[c];
                    }
                }
            }
            g = abar;
        }
    }
}
