//! Residual and energy objectives over a shared trial-function context.
//!
//! Every objective is a weighted sum of per-point terms. Values can be computed
//! from plain jets (cheap, used for reporting and as a reference), and gradients
//! come from one tape per chunk of points, summed.

use crate::autodiff::{check_finite, AdError, Comp, Jet2, Tape, Unary, Var};
use crate::barycentric::{coordinates_jet, CoordKind};
use crate::expr::{Bindings, EvalError, Expr};
use crate::geometry::{refine_triangles, triangle_quadrature, GeometryError, Point, Polygon};
use crate::network::Architecture;
use crate::trial::{TrialContext, TrialError, TrialKind, TrialPoint, CHUNK};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("inverse problem needs at least one data point")]
    EmptyData,
    #[error("data weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error("{what}: expected {expected} values, got {got}")]
    Length { what: &'static str, expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Poisson,
    NonlinearPoisson,
    Eikonal,
    Ritz,
    ParametricPoisson,
    InversePoisson,
}

/// Shift inside the square root of the eikonal residual.
pub const EIKONAL_EPS: f64 = 1e-12;

/// Number of learned source coefficients in the inverse problem.
pub const SOURCE_TERMS: usize = 6;

/// Monomials `1, x, y, x^2, y^2, xy` of the learned source.
pub fn source_basis(p: Point) -> [f64; SOURCE_TERMS] {
    let [x, y] = p;
    [1.0, x, y, x * x, y * y, x * y]
}

/// Manufactured solution and source pairs used by the built-in experiments.
pub mod manufactured {
    /// Exact solution on the mapped quadrilateral family with shape parameter `p`.
    pub const PARAMETRIC_EXACT: &str = "15*x*y*(1 - x)*(2 + p*x - x - 2*y)";
    /// `-lap` of [`PARAMETRIC_EXACT`].
    pub const PARAMETRIC_SOURCE: &str = "60*x*(1 - x) + 60*y*(1 - y) + 30*y*(1 - p)*(1 - 3*x)";
    /// Nonlinear problem `lap u - exp(u) + f = 0` at frequency `2 pi`.
    pub const NONLINEAR_EXACT: &str = "1 + sin(2*pi*x)*cos(2*pi*y)";
    pub const NONLINEAR_SOURCE: &str = "exp(1 + sin(2*pi*x)*cos(2*pi*y)) + 8*pi^2*sin(2*pi*x)*cos(2*pi*y)";
    /// Source of the inverse heat problem, also its coefficient vector.
    pub const INVERSE_SOURCE: &str = "60*(x + y)";
    pub const INVERSE_COEFFS: [f64; 6] = [0.0, 60.0, 60.0, 0.0, 0.0, 0.0];
}

/// Coefficients of the Laplacian in reference coordinates `(xi, eta)` for the map
/// `x = xi, y = eta (2 + p xi - xi) / 2`: `[c_xieta, c_etaeta, c_eta, |J|]`, so that
/// `lap u = u_xixi + c_xieta u_xieta + c_etaeta u_etaeta + c_eta u_eta`.
pub fn mapped_laplacian(xi: f64, eta: f64, p: f64) -> [f64; 4] {
    let q = 1.0 - p;
    let a = 2.0 - q * xi;
    [2.0 * q * eta / a, (4.0 + eta * eta * q * q) / (a * a), 2.0 * q * q * eta / (a * a), a / 2.0]
}

/// Physical point of reference point `(xi, eta)` for shape parameter `p`.
pub fn mapped_point(xi: f64, eta: f64, p: f64) -> Point {
    [xi, eta * (2.0 + p * xi - xi) / 2.0]
}

/// Quadrature nodes and area weights on a fan triangulation refined `level` times.
pub fn cubature_nodes(poly: &Polygon, level: u32, order: usize) -> Result<(Vec<Point>, Vec<f64>), GeometryError> {
    let rule = triangle_quadrature(order)?;
    let (pts, w) = refine_triangles(poly, level).iter().flat_map(|t| rule.map(t)).unzip();
    Ok((pts, w))
}

fn eval_at(f: &Expr, p: Point, extra: Option<f64>) -> Result<f64, EvalError> {
    let mut b = Bindings::xy(p[0], p[1]);
    if let Some(v) = extra {
        b = b.with_p(v);
    }
    f.eval(&b)
}

#[derive(Debug, Clone)]
enum Terms {
    Poisson { f: Vec<f64> },
    Nonlinear { f: Vec<f64> },
    Eikonal,
    Ritz { f: Vec<f64>, w: Vec<f64> },
    Parametric { f: Vec<f64>, coef: Vec<[f64; 4]> },
    Inverse { basis: Vec<[f64; SOURCE_TERMS]>, data: Box<TrialContext>, values: Vec<f64>, weight: f64, scale: f64 },
}

/// A scalar objective of the network (and, for the inverse problem, source) parameters.
#[derive(Debug, Clone)]
pub struct Objective {
    kind: ObjectiveKind,
    trial: TrialContext,
    terms: Terms,
}

impl Objective {
    fn build(kind: ObjectiveKind, trial: TrialContext, terms: Terms) -> Result<Self, LossError> {
        if trial.is_empty() {
            return Err(LossError::EmptyBatch);
        }
        Ok(Objective { kind, trial, terms })
    }

    fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), LossError> {
        if expected != got {
            return Err(LossError::Length { what, expected, got });
        }
        Ok(())
    }

    /// Mean of `(lap u + f)^2` over `points`, which must be the points of `trial`.
    pub fn poisson(trial: TrialContext, points: &[Point], f: &Expr) -> Result<Self, LossError> {
        Self::check_len("points", trial.len(), points.len())?;
        let f = points.iter().map(|p| eval_at(f, *p, None)).collect::<Result<_, _>>()?;
        Self::build(ObjectiveKind::Poisson, trial, Terms::Poisson { f })
    }

    /// Mean of `(lap u - exp(u) + f)^2`.
    pub fn nonlinear_poisson(trial: TrialContext, points: &[Point], f: &Expr) -> Result<Self, LossError> {
        Self::check_len("points", trial.len(), points.len())?;
        let f = points.iter().map(|p| eval_at(f, *p, None)).collect::<Result<_, _>>()?;
        Self::build(ObjectiveKind::NonlinearPoisson, trial, Terms::Nonlinear { f })
    }

    /// Mean of `(sqrt(|grad u|^2 + eps) - 1)^2`.
    pub fn eikonal(trial: TrialContext) -> Result<Self, LossError> {
        Self::build(ObjectiveKind::Eikonal, trial, Terms::Eikonal)
    }

    /// Potential energy `1/2 int |grad u|^2 - int f u` by cubature with area weights `w`.
    pub fn ritz(trial: TrialContext, points: &[Point], weights: Vec<f64>, f: &Expr) -> Result<Self, LossError> {
        Self::check_len("points", trial.len(), points.len())?;
        Self::check_len("weights", trial.len(), weights.len())?;
        let f = points.iter().map(|p| eval_at(f, *p, None)).collect::<Result<_, _>>()?;
        Self::build(ObjectiveKind::Ritz, trial, Terms::Ritz { f, w: weights })
    }

    /// Mean of `|J| (lap u + f)^2` over reference points `(xi, eta, p)` of the mapped family.
    /// Coordinates are those of the reference unit square; the network also sees `p`.
    /// Boundary data is homogeneous. `f` may use `x`, `y` (physical) and `p`.
    pub fn parametric(arch: Architecture, coords: CoordKind, points: &[[f64; 3]], f: &Expr) -> Result<Self, LossError> {
        let square = Polygon::unit_square();
        let mut tps = Vec::with_capacity(points.len());
        let mut fs = Vec::with_capacity(points.len());
        let mut coef = Vec::with_capacity(points.len());
        for &[xi, eta, p] in points {
            let lambda = coordinates_jet(coords, &square, [xi, eta]).map_err(TrialError::from)?;
            tps.push(TrialPoint { lambda, g: Jet2::ZERO, extra: Some(p), phi: None });
            fs.push(eval_at(f, mapped_point(xi, eta, p), Some(p))?);
            coef.push(mapped_laplacian(xi, eta, p));
        }
        let trial = TrialContext::from_points(TrialKind::Transfinite, 4, arch, tps)?;
        Self::build(ObjectiveKind::ParametricPoisson, trial, Terms::Parametric { f: fs, coef })
    }

    /// Mean of `(lap u + f_a)^2` over `trial` plus `weight` times the mean squared misfit
    /// between `u` and `values` on `data`. The source coefficients follow the network
    /// parameters in the parameter vector.
    pub fn inverse(trial: TrialContext, points: &[Point], data: TrialContext, values: Vec<f64>, weight: f64) -> Result<Self, LossError> {
        Self::check_len("points", trial.len(), points.len())?;
        if data.is_empty() {
            return Err(LossError::EmptyData);
        }
        Self::check_len("data values", data.len(), values.len())?;
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(LossError::InvalidWeight(weight));
        }
        let basis = points.iter().map(|p| source_basis(*p)).collect();
        Self::build(ObjectiveKind::InversePoisson, trial, Terms::Inverse { basis, data: Box::new(data), values, weight, scale: 1.0 })
    }

    /// Learn the source coefficients in units of `scale`: the parameter vector holds
    /// `a / scale`. Large scales let the coefficients travel far at Adam's bounded step.
    pub fn with_source_scale(mut self, scale: f64) -> Result<Self, LossError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(LossError::InvalidWeight(scale));
        }
        if let Terms::Inverse { scale: s, .. } = &mut self.terms {
            *s = scale;
        }
        Ok(self)
    }

    /// Source coefficients `a_0..a_5` encoded in `theta`, for the inverse problem.
    pub fn source_coefficients(&self, theta: &[f64]) -> Option<[f64; SOURCE_TERMS]> {
        let Terms::Inverse { scale, .. } = &self.terms else { return None };
        let raw = theta.get(self.n_network_params()..)?;
        let mut a = [0.0; SOURCE_TERMS];
        for (a, r) in a.iter_mut().zip(raw) {
            *a = scale * r;
        }
        Some(a)
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn trial(&self) -> &TrialContext {
        &self.trial
    }

    /// Number of residual/cubature points, the set that mini-batches partition.
    pub fn n_points(&self) -> usize {
        self.trial.len()
    }

    pub fn n_network_params(&self) -> usize {
        self.trial.arch().n_params()
    }

    pub fn n_params(&self) -> usize {
        self.n_network_params() + if self.kind == ObjectiveKind::InversePoisson { SOURCE_TERMS } else { 0 }
    }

    /// Seeded network initialization followed by zero source coefficients.
    pub fn initial_params(&self, seed: u64) -> Vec<f64> {
        let mut t = self.trial.arch().init(seed);
        t.resize(self.n_params(), 0.0);
        t
    }

    fn check_theta(&self, theta: &[f64]) -> Result<(), LossError> {
        Self::check_len("parameters", self.n_params(), theta.len())
    }

    /// Weight of point `k`'s term when the batch holds `m` of the points.
    fn point_weight(&self, k: usize, m: usize) -> f64 {
        match &self.terms {
            Terms::Ritz { w, .. } => w[k] * self.n_points() as f64 / m as f64,
            _ => 1.0 / m as f64,
        }
    }

    /// Unweighted term of point `k` from its trial value `u`.
    fn term_plain(&self, k: usize, u: Jet2, extras: &[f64]) -> f64 {
        match &self.terms {
            Terms::Poisson { f } => (u.laplacian() + f[k]).powi(2),
            Terms::Nonlinear { f } => (u.laplacian() - u.v.exp() + f[k]).powi(2),
            Terms::Eikonal => ((u.grad_norm_sq() + EIKONAL_EPS).sqrt() - 1.0).powi(2),
            Terms::Ritz { f, .. } => 0.5 * u.grad_norm_sq() - f[k] * u.v,
            Terms::Parametric { f, coef } => {
                let [c1, c2, c3, j] = coef[k];
                j * (u.hxx + c1 * u.hxy + c2 * u.hyy + c3 * u.gy + f[k]).powi(2)
            }
            Terms::Inverse { basis, scale, .. } => {
                let fa: f64 = scale * basis[k].iter().zip(extras).map(|(b, a)| b * a).sum::<f64>();
                (u.laplacian() + fa).powi(2)
            }
        }
    }

    fn term_tape(&self, t: &mut Tape<'_>, k: usize, u: Var, extras: &[Var]) -> Var {
        match &self.terms {
            Terms::Poisson { f } => {
                let l = t.laplacian(u);
                let c = t.scalar(f[k]);
                let r = t.add(l, c);
                t.square(r)
            }
            Terms::Nonlinear { f } => {
                let l = t.laplacian(u);
                let v = t.component(u, Comp::V);
                let e = t.unary(v, Unary::Exp);
                let d = t.sub(l, e);
                let c = t.scalar(f[k]);
                let r = t.add(d, c);
                t.square(r)
            }
            Terms::Eikonal => {
                let gx = t.component(u, Comp::Gx);
                let gy = t.component(u, Comp::Gy);
                let sx = t.square(gx);
                let sy = t.square(gy);
                let s = t.add(sx, sy);
                let eps = t.scalar(EIKONAL_EPS);
                let one = t.scalar(1.0);
                let arg = t.add(s, eps);
                let n = t.unary(arg, Unary::Sqrt);
                let r = t.sub(n, one);
                t.square(r)
            }
            Terms::Ritz { f, .. } => {
                let gx = t.component(u, Comp::Gx);
                let gy = t.component(u, Comp::Gy);
                let sx = t.square(gx);
                let sy = t.square(gy);
                let s = t.add(sx, sy);
                let half = t.scale(s, 0.5);
                let v = t.component(u, Comp::V);
                let fu = t.scale(v, f[k]);
                t.sub(half, fu)
            }
            Terms::Parametric { f, coef } => {
                let [c1, c2, c3, j] = coef[k];
                let parts = [(Comp::Hxx, 1.0), (Comp::Hxy, c1), (Comp::Hyy, c2), (Comp::Gy, c3)];
                let mut acc = vec![t.scalar(f[k])];
                for (comp, c) in parts {
                    let x = t.component(u, comp);
                    acc.push(t.scale(x, c));
                }
                let r = t.sum(&acc);
                let r2 = t.square(r);
                t.scale(r2, j)
            }
            Terms::Inverse { basis, scale, .. } => {
                let mut acc = vec![t.laplacian(u)];
                for (a, b) in extras.iter().zip(basis[k]) {
                    acc.push(t.scale(*a, b * scale));
                }
                let r = t.sum(&acc);
                t.square(r)
            }
        }
    }

    /// Loss from given trial values, one per point; `extras` are the source coefficients.
    pub fn loss_from_values(&self, us: &[Jet2], extras: &[f64], data_us: &[Jet2]) -> f64 {
        let m = us.len();
        let mut total: f64 = us.iter().enumerate().map(|(k, u)| self.point_weight(k, m) * self.term_plain(k, *u, extras)).sum();
        if let Terms::Inverse { values, weight, .. } = &self.terms {
            let misfit: f64 = data_us.iter().zip(values).map(|(u, d)| (u.v - d).powi(2)).sum();
            total += weight * misfit / values.len() as f64;
        }
        total
    }

    /// Full-batch loss without recording a tape.
    pub fn value(&self, theta: &[f64]) -> Result<f64, LossError> {
        self.check_theta(theta)?;
        let us = self.trial.evaluate(theta)?;
        let data_us = match &self.terms {
            Terms::Inverse { data, .. } => data.evaluate_values(theta)?.into_iter().map(Jet2::cst).collect(),
            _ => Vec::new(),
        };
        let l = self.loss_from_values(&us, &theta[self.n_network_params()..], &data_us);
        if !l.is_finite() {
            return Err(LossError::NonFiniteLoss(l));
        }
        Ok(l)
    }

    /// Loss and gradient over `batch` (all points when `None`).
    pub fn value_and_grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<(f64, Vec<f64>), LossError> {
        self.check_theta(theta)?;
        let all: Vec<usize>;
        let idx = match batch {
            Some(b) => b,
            None => {
                all = (0..self.n_points()).collect();
                &all
            }
        };
        if idx.is_empty() {
            return Err(LossError::EmptyBatch);
        }
        let n_net = self.n_network_params();
        let mut value = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for chunk in idx.chunks(CHUNK) {
            let mut tape = Tape::new(theta);
            let extras: Vec<Var> = (n_net..theta.len()).map(|j| tape.param(j)).collect();
            let us = self.trial.record(&mut tape, chunk)?;
            let terms: Vec<Var> = chunk
                .iter()
                .zip(us)
                .map(|(&k, u)| {
                    let term = self.term_tape(&mut tape, k, u, &extras);
                    tape.scale(term, self.point_weight(k, idx.len()))
                })
                .collect();
            let out = tape.sum(&terms);
            value += tape.value(out).v;
            for (g, d) in grad.iter_mut().zip(tape.gradient(out)) {
                *g += d;
            }
        }
        if let Terms::Inverse { data, values, weight, .. } = &self.terms {
            let all: Vec<usize> = (0..data.len()).collect();
            let scale = weight / values.len() as f64;
            for chunk in all.chunks(CHUNK) {
                let mut tape = Tape::new(theta);
                let us = data.record_values(&mut tape, chunk)?;
                let terms: Vec<Var> = chunk
                    .iter()
                    .zip(us)
                    .map(|(&k, u)| {
                        let v = tape.component(u, Comp::V);
                        let d = tape.scalar(values[k]);
                        let r = tape.sub(v, d);
                        let r2 = tape.square(r);
                        tape.scale(r2, scale)
                    })
                    .collect();
                let out = tape.sum(&terms);
                value += tape.value(out).v;
                for (g, d) in grad.iter_mut().zip(tape.gradient(out)) {
                    *g += d;
                }
            }
        }
        if !value.is_finite() {
            return Err(LossError::NonFiniteLoss(value));
        }
        check_finite(&grad)?;
        Ok((value, grad))
    }
}
