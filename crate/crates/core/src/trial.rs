//! Trial functions `u = g + N(lambda) - L[N](lambda)` that meet Dirichlet data
//! exactly, plus the distance-function baseline `u = g + phi N` on the unit square.

use crate::autodiff::{Jet2, Scalar, Tape, Var};
use crate::barycentric::{coordinates_jet, BaryError, CoordKind};
use crate::geometry::{Point, Polygon};
use crate::network::{Architecture, NetworkBatch, NetworkError};
use crate::transfinite::{edge_projection, lift_field, lift_g, vertex_projection, BoundarySpec, Side, TransfiniteError};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrialError {
    #[error(transparent)]
    Bary(#[from] BaryError),
    #[error(transparent)]
    Transfinite(#[from] TransfiniteError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("network takes {got} inputs but the trial needs {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("point ({0}, {1}) is on the boundary where the distance function vanishes")]
    OnBoundary(f64, f64),
    #[error("the distance-function trial needs the unit square")]
    DomainMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    #[default]
    Transfinite,
    AdfSquare,
}

/// Cached, parameter-independent data at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPoint {
    /// Coordinates as jets in the local spatial variables.
    pub lambda: Vec<Jet2>,
    pub g: Jet2,
    /// Extra network input passed through projections unchanged (the shape parameter).
    pub extra: Option<f64>,
    /// Distance function, for the baseline trial only.
    pub phi: Option<Jet2>,
}

/// Points evaluated per tape segment; bounds memory of the stored layer activations.
pub const CHUNK: usize = 256;

/// Distance-like function on the unit square: `(1/x + 1/(1-x) + 1/y + 1/(1-y))^-1`.
pub fn adf_square<S: Scalar>(x: S, y: S) -> S {
    let one = S::constant(1.0);
    (x.recip() + (one - x).recip() + y.recip() + (one - y).recip()).recip()
}

#[derive(Debug, Clone)]
pub struct TrialContext {
    kind: TrialKind,
    n: usize,
    arch: Architecture,
    points: Vec<TrialPoint>,
    /// Network inputs per point, `evals_per_point * n_in` jets each.
    inputs: Vec<Jet2>,
}

impl TrialContext {
    /// Build from precomputed points (e.g. mapped coordinates).
    pub fn from_points(kind: TrialKind, n: usize, arch: Architecture, points: Vec<TrialPoint>) -> Result<Self, TrialError> {
        let extra = points.first().is_some_and(|p| p.extra.is_some());
        let expected = n + usize::from(extra);
        if arch.n_in() != expected {
            return Err(TrialError::InputWidth { expected, got: arch.n_in() });
        }
        let mut ctx = TrialContext { kind, n, arch, points, inputs: Vec::new() };
        ctx.inputs = ctx.points.iter().flat_map(|p| ctx.point_inputs(p)).collect();
        Ok(ctx)
    }

    /// Cartesian points in `poly` with coordinates of kind `coords` and boundary data `spec`.
    pub fn cartesian(
        kind: TrialKind,
        coords: CoordKind,
        spec: &BoundarySpec,
        arch: Architecture,
        pts: &[Point],
    ) -> Result<Self, TrialError> {
        let poly = spec.polygon();
        if kind == TrialKind::AdfSquare && *poly != Polygon::unit_square() {
            return Err(TrialError::DomainMismatch);
        }
        let points = pts
            .iter()
            .map(|p| {
                let lambda = coordinates_jet(coords, poly, *p)?;
                let g = lift_g(spec, &lambda)?;
                let phi = if kind == TrialKind::AdfSquare {
                    if p[0] <= 0.0 || p[0] >= 1.0 || p[1] <= 0.0 || p[1] >= 1.0 {
                        return Err(TrialError::OnBoundary(p[0], p[1]));
                    }
                    let (x, y) = Jet2::seed(p[0], p[1]);
                    Some(adf_square(x, y))
                } else {
                    None
                };
                Ok(TrialPoint { lambda, g, extra: None, phi })
            })
            .collect::<Result<Vec<_>, TrialError>>()?;
        TrialContext::from_points(kind, poly.n(), arch, points)
    }

    pub fn kind(&self) -> TrialKind {
        self.kind
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &TrialPoint {
        &self.points[k]
    }

    fn with_extra(&self, mu: Vec<Jet2>, extra: Option<f64>) -> Vec<Jet2> {
        let mut v = mu;
        if let Some(p) = extra {
            v.push(Jet2::cst(p));
        }
        v
    }

    fn evals_per_point(&self) -> usize {
        match self.kind {
            TrialKind::Transfinite => 2 * self.n + 1,
            TrialKind::AdfSquare => 1,
        }
    }

    /// `[lambda, mu_0^next, mu_0^prev, mu_1^next, ...]`, each followed by the extra input.
    fn point_inputs(&self, p: &TrialPoint) -> Vec<Jet2> {
        let mut out = self.with_extra(p.lambda.clone(), p.extra);
        if self.kind == TrialKind::Transfinite {
            for i in 0..self.n {
                for side in [Side::Next, Side::Prev] {
                    out.extend(self.with_extra(edge_projection(&p.lambda, i, side), p.extra));
                }
            }
        }
        out
    }

    /// `g + F(lambda) - L[F](lambda)` for an arbitrary field `F` of the network inputs.
    pub fn trial_with<E>(&self, k: usize, mut f: impl FnMut(&[Jet2]) -> Result<Jet2, E>) -> Result<Jet2, E> {
        let p = &self.points[k];
        let full = |mu: &[Jet2]| self.with_extra(mu.to_vec(), p.extra);
        let direct = f(&full(&p.lambda))?;
        match self.kind {
            TrialKind::Transfinite => {
                let lifted = lift_field(&p.lambda, |mu| f(&full(mu)))?;
                Ok(p.g + direct - lifted)
            }
            TrialKind::AdfSquare => Ok(p.g + p.phi.expect("distance cached") * direct),
        }
    }

    /// Reference evaluation through [`lift_field`] and the scalar network forward.
    pub fn u_plain(&self, params: &[f64], k: usize) -> Result<Jet2, TrialError> {
        Ok(self.trial_with(k, |x| self.arch.forward(params, x))?)
    }

    /// Batched evaluation of every point, without recording a tape.
    pub fn evaluate(&self, params: &[f64]) -> Result<Vec<Jet2>, TrialError> {
        self.evaluate_with(params, false)
    }

    /// Trial values only, skipping all spatial derivatives.
    pub fn evaluate_values(&self, params: &[f64]) -> Result<Vec<f64>, TrialError> {
        Ok(self.evaluate_with(params, true)?.into_iter().map(|u| u.v).collect())
    }

    fn batch<'a>(&'a self, params: &'a [f64], inputs: &[Jet2], values_only: bool) -> Result<NetworkBatch<'a>, NetworkError> {
        if values_only {
            NetworkBatch::values(&self.arch, params, inputs)
        } else {
            NetworkBatch::new(&self.arch, params, inputs)
        }
    }

    fn evaluate_with(&self, params: &[f64], values_only: bool) -> Result<Vec<Jet2>, TrialError> {
        let params = &params[..self.arch.n_params()];
        let all: Vec<usize> = (0..self.len()).collect();
        let mut out = Vec::with_capacity(self.len());
        for chunk in all.chunks(CHUNK) {
            let (inputs, layout) = self.chunk_inputs(chunk);
            let batch = self.batch(params, &inputs, values_only)?;
            let o = crate::autodiff::BatchOp::outputs(&batch);
            for (j, &k) in chunk.iter().enumerate() {
                out.push(self.assemble_plain(k, &o[j * self.evals_per_point()..], &layout.vertex_outputs(o, k, self)));
            }
        }
        Ok(out)
    }

    fn assemble_plain(&self, k: usize, o: &[Jet2], v: &[Jet2]) -> Jet2 {
        let p = &self.points[k];
        match self.kind {
            TrialKind::Transfinite => {
                let lifted = (0..self.n).fold(Jet2::ZERO, |acc, i| acc + p.lambda[i] * (o[1 + 2 * i] + o[2 + 2 * i] - v[i]));
                p.g + o[0] - lifted
            }
            TrialKind::AdfSquare => p.g + p.phi.expect("distance cached") * o[0],
        }
    }

    /// Network inputs for a chunk: per-point blocks, then `n` vertex inputs per distinct extra value.
    fn chunk_inputs(&self, chunk: &[usize]) -> (Vec<Jet2>, VertexLayout) {
        let stride = self.evals_per_point() * self.arch.n_in();
        let mut inputs = Vec::with_capacity(chunk.len() * stride);
        for &k in chunk {
            inputs.extend_from_slice(&self.inputs[k * stride..(k + 1) * stride]);
        }
        let mut layout = VertexLayout { start: BTreeMap::new() };
        if self.kind == TrialKind::Transfinite {
            let mut next = chunk.len() * self.evals_per_point();
            for &k in chunk {
                let extra = self.points[k].extra;
                let key = extra.map(f64::to_bits);
                if let std::collections::btree_map::Entry::Vacant(e) = layout.start.entry(key) {
                    e.insert(next);
                    for i in 0..self.n {
                        inputs.extend(self.with_extra(vertex_projection(self.n, i), extra));
                    }
                    next += self.n;
                }
            }
        }
        (inputs, layout)
    }

    /// Record trial values of the points in `chunk` on `tape`; network parameters occupy the front of the tape's parameters.
    pub fn record<'a>(&'a self, tape: &mut Tape<'a>, chunk: &[usize]) -> Result<Vec<Var>, TrialError> {
        self.record_with(tape, chunk, false)
    }

    /// Like [`TrialContext::record`], but only the value component of each result is meaningful.
    pub fn record_values<'a>(&'a self, tape: &mut Tape<'a>, chunk: &[usize]) -> Result<Vec<Var>, TrialError> {
        self.record_with(tape, chunk, true)
    }

    fn record_with<'a>(&'a self, tape: &mut Tape<'a>, chunk: &[usize], values_only: bool) -> Result<Vec<Var>, TrialError> {
        let params = &tape.params()[..self.arch.n_params()];
        let (inputs, layout) = self.chunk_inputs(chunk);
        let outs = tape.batch(Box::new(self.batch(params, &inputs, values_only)?));
        let e = self.evals_per_point();
        let mut us = Vec::with_capacity(chunk.len());
        for (j, &k) in chunk.iter().enumerate() {
            let p = &self.points[k];
            let o = &outs[j * e..(j + 1) * e];
            let g = tape.constant(p.g);
            let u = match self.kind {
                TrialKind::Transfinite => {
                    let v0 = layout.start[&p.extra.map(f64::to_bits)];
                    let terms: Vec<Var> = (0..self.n)
                        .map(|i| {
                            let s = tape.add(o[1 + 2 * i], o[2 + 2 * i]);
                            let t = tape.sub(s, outs[v0 + i]);
                            let l = tape.constant(p.lambda[i]);
                            tape.mul(l, t)
                        })
                        .collect();
                    let lifted = tape.sum(&terms);
                    let d = tape.sub(o[0], lifted);
                    tape.add(g, d)
                }
                TrialKind::AdfSquare => {
                    let phi = tape.constant(p.phi.expect("distance cached"));
                    let m = tape.mul(phi, o[0]);
                    tape.add(g, m)
                }
            };
            us.push(u);
        }
        Ok(us)
    }
}

struct VertexLayout {
    start: BTreeMap<Option<u64>, usize>,
}

impl VertexLayout {
    fn vertex_outputs(&self, o: &[Jet2], k: usize, ctx: &TrialContext) -> Vec<Jet2> {
        match self.start.get(&ctx.points[k].extra.map(f64::to_bits)) {
            Some(&s) => o[s..s + ctx.n].to_vec(),
            None => Vec::new(),
        }
    }
}
