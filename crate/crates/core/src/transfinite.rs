//! Dirichlet boundary data, the Wachspress-blended transfinite lifting and
//! bilinear Coons interpolation on the unit square.

use crate::autodiff::Scalar;
use crate::expr::{parse, Bindings, EvalError, Expr, ParseError};
use crate::geometry::Polygon;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransfiniteError {
    #[error("expected {expected} edge expressions, got {got}")]
    EdgeCount { expected: usize, got: usize },
    #[error("edge {edge}: {source}")]
    Parse { edge: usize, source: ParseError },
    #[error("edge {edge}: {source}")]
    Eval { edge: usize, source: EvalError },
    #[error("boundary data does not match at vertex {vertex} (jump {jump:e})")]
    Mismatch { vertex: usize, jump: f64 },
    #[error("operation needs the unit square")]
    DomainMismatch,
}

/// Per-edge Dirichlet data.
///
/// Edge `i` runs from `x_i` to `x_{i+1}`. Its expression may use `x`, `y`
/// (Cartesian point on the edge) and `t` (edge parameter in `[0, 1]`, equal to
/// `lambda_{i+1}` on the edge).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    poly: Polygon,
    edges: Vec<Expr>,
}

/// Jumps `|alpha_{i-1}(1) - alpha_i(0)|` at each vertex `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingReport {
    pub mismatches: Vec<f64>,
    pub tol: f64,
}

impl MatchingReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.iter().all(|m| *m <= self.tol)
    }

    pub fn worst(&self) -> Option<(usize, f64)> {
        self.mismatches
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
                Some((_, b)) if b >= m => best,
                _ => Some((i, m)),
            })
    }
}

/// Samples per edge used to reject data that is not finite on the closed edge.
const FINITE_PROBES: usize = 64;

impl BoundarySpec {
    pub fn new(poly: &Polygon, edges: Vec<Expr>) -> Result<Self, TransfiniteError> {
        if edges.len() != poly.n() {
            return Err(TransfiniteError::EdgeCount { expected: poly.n(), got: edges.len() });
        }
        let spec = BoundarySpec { poly: poly.clone(), edges };
        for i in 0..poly.n() {
            for k in 0..=FINITE_PROBES {
                spec.alpha(i, k as f64 / FINITE_PROBES as f64)?;
            }
        }
        Ok(spec)
    }

    pub fn parse<S: AsRef<str>>(poly: &Polygon, sources: &[S]) -> Result<Self, TransfiniteError> {
        let edges = sources
            .iter()
            .enumerate()
            .map(|(edge, s)| parse(s.as_ref()).map_err(|source| TransfiniteError::Parse { edge, source }))
            .collect::<Result<Vec<_>, _>>()?;
        BoundarySpec::new(poly, edges)
    }

    pub fn constant(poly: &Polygon, c: f64) -> Self {
        BoundarySpec { poly: poly.clone(), edges: vec![Expr::num(c); poly.n()] }
    }

    pub fn homogeneous(poly: &Polygon) -> Self {
        BoundarySpec::constant(poly, 0.0)
    }

    pub fn polygon(&self) -> &Polygon {
        &self.poly
    }

    pub fn edges(&self) -> &[Expr] {
        &self.edges
    }

    pub fn is_homogeneous(&self) -> bool {
        self.edges.iter().all(|e| *e == Expr::Num(0.0))
    }

    /// `alpha_i(s)`: the data of edge `i` at parameter `s`.
    pub fn alpha<S: Scalar>(&self, i: usize, s: S) -> Result<S, TransfiniteError> {
        let i = i % self.poly.n();
        let (a, b) = (self.poly.vertex(i), self.poly.vertex(i + 1));
        let x = S::constant(a[0]) + s.scale(b[0] - a[0]);
        let y = S::constant(a[1]) + s.scale(b[1] - a[1]);
        self.edges[i].eval(&Bindings::xy(x, y).with_t(s)).map_err(|source| TransfiniteError::Eval { edge: i, source })
    }

    pub fn check_matching(&self, tol: f64) -> Result<MatchingReport, TransfiniteError> {
        let n = self.poly.n();
        let mismatches = (0..n)
            .map(|i| Ok((self.alpha(i + n - 1, 1.0)? - self.alpha(i, 0.0)?).abs()))
            .collect::<Result<Vec<f64>, TransfiniteError>>()?;
        Ok(MatchingReport { mismatches, tol })
    }

    /// Like [`check_matching`](Self::check_matching) but fails on the worst jump.
    pub fn require_matching(&self, tol: f64) -> Result<(), TransfiniteError> {
        let r = self.check_matching(tol)?;
        match r.worst() {
            Some((vertex, jump)) if jump > tol => Err(TransfiniteError::Mismatch { vertex, jump }),
            _ => Ok(()),
        }
    }
}

/// `g(lambda) = sum_i lambda_i [alpha_i(lambda_{i+1}) + alpha_{i-1}(1 - lambda_{i-1}) - alpha_i(0)]`.
pub fn lift_g<S: Scalar>(spec: &BoundarySpec, lambda: &[S]) -> Result<S, TransfiniteError> {
    let n = lambda.len();
    let one = S::constant(1.0);
    let mut g = S::constant(0.0);
    for i in 0..n {
        let next = lambda[(i + 1) % n];
        let prev = lambda[(i + n - 1) % n];
        let term = spec.alpha(i, next)? + spec.alpha(i + n - 1, one - prev)? - spec.alpha(i, S::constant(0.0))?;
        g = g + lambda[i] * term;
    }
    Ok(g)
}

/// Which edge through vertex `i` a projection lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Edge `i`, towards `x_{i+1}`.
    Next,
    /// Edge `i-1`, towards `x_{i-1}`.
    Prev,
}

/// Projection of `lambda` onto an edge through vertex `i`: keeps the
/// neighbour's coordinate, gives vertex `i` the remainder, zeroes the rest.
pub fn edge_projection<S: Scalar>(lambda: &[S], i: usize, side: Side) -> Vec<S> {
    let n = lambda.len();
    let j = match side {
        Side::Next => (i + 1) % n,
        Side::Prev => (i + n - 1) % n,
    };
    let mut mu = vec![S::constant(0.0); n];
    mu[j] = lambda[j];
    mu[i] = S::constant(1.0) - lambda[j];
    mu
}

pub fn vertex_projection<S: Scalar>(n: usize, i: usize) -> Vec<S> {
    let mut e = vec![S::constant(0.0); n];
    e[i] = S::constant(1.0);
    e
}

/// `L[F](lambda) = sum_i lambda_i [F(mu_i^next) + F(mu_i^prev) - F(e_i)]`.
///
/// On the boundary `L[F] = F`, so `F - L[F]` vanishes there for any `F`.
pub fn lift_field<S: Scalar, E>(lambda: &[S], mut f: impl FnMut(&[S]) -> Result<S, E>) -> Result<S, E> {
    let n = lambda.len();
    let mut acc = S::constant(0.0);
    for i in 0..n {
        let a = f(&edge_projection(lambda, i, Side::Next))?;
        let b = f(&edge_projection(lambda, i, Side::Prev))?;
        let c = f(&vertex_projection(n, i))?;
        acc = acc + lambda[i] * (a + b - c);
    }
    Ok(acc)
}

/// Bilinear Coons patch of the boundary data on the unit square.
pub fn coons_square<S: Scalar>(spec: &BoundarySpec, x: S, y: S) -> Result<S, TransfiniteError> {
    if *spec.polygon() != Polygon::unit_square() {
        return Err(TransfiniteError::DomainMismatch);
    }
    let one = S::constant(1.0);
    let zero = S::constant(0.0);
    let bottom = spec.alpha(0, x)?;
    let right = spec.alpha(1, y)?;
    let top = spec.alpha(2, one - x)?;
    let left = spec.alpha(3, one - y)?;
    let c00 = spec.alpha(0, zero)?;
    let c10 = spec.alpha(1, zero)?;
    let c11 = spec.alpha(2, zero)?;
    let c01 = spec.alpha(3, zero)?;
    let (mx, my) = (one - x, one - y);
    let ruled = my * bottom + y * top + mx * left + x * right;
    let corners = mx * my * c00 + x * my * c10 + x * y * c11 + mx * y * c01;
    Ok(ruled - corners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barycentric::{wachspress, wachspress_global};
    use crate::geometry::random_interior;

    fn square_61() -> BoundarySpec {
        BoundarySpec::parse(&Polygon::unit_square(), &["0", "0", "sin(pi*x)", "0"]).unwrap()
    }

    #[test]
    fn matching_reports() {
        assert!(square_61().check_matching(1e-12).unwrap().is_ok());
        let pent = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 2.0], [0.0, 1.0]]).unwrap();
        let spec = BoundarySpec::parse(&pent, &["-sin(4*pi*x)", "4*y*(1-y)", "y-1", "1", "y^2"]).unwrap();
        let r = spec.check_matching(1e-12).unwrap();
        assert!(r.is_ok());
        assert_eq!(r.mismatches[3], 0.0);
        let bad = BoundarySpec::parse(&Polygon::unit_square(), &["0", "1", "1", "0"]).unwrap();
        let r = bad.check_matching(1e-12).unwrap();
        assert_eq!(r.mismatches[1], 1.0);
        assert_eq!(bad.require_matching(1e-12), Err(TransfiniteError::Mismatch { vertex: 1, jump: 1.0 }));
    }

    #[test]
    fn construction_errors() {
        let s = Polygon::unit_square();
        assert!(matches!(BoundarySpec::parse(&s, &["0", "0"]), Err(TransfiniteError::EdgeCount { expected: 4, got: 2 })));
        assert!(matches!(BoundarySpec::parse(&s, &["0", "0", "sin(", "0"]), Err(TransfiniteError::Parse { edge: 2, .. })));
        assert!(matches!(BoundarySpec::parse(&s, &["1/(x-0.5)", "0", "0", "0"]), Err(TransfiniteError::Eval { edge: 0, .. })));
        assert!(matches!(BoundarySpec::parse(&s, &["p", "0", "0", "0"]), Err(TransfiniteError::Eval { edge: 0, .. })));
    }

    #[test]
    fn edge_parameter_matches_cartesian_data() {
        let s = Polygon::unit_square();
        let a = BoundarySpec::parse(&s, &["0", "0", "sin(pi*x)", "0"]).unwrap();
        let b = BoundarySpec::parse(&s, &["0", "0", "sin(pi*(1-t))", "0"]).unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert!((a.alpha(2, t).unwrap() - b.alpha(2, t).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn square_61_values() {
        let spec = square_61();
        let s = spec.polygon().clone();
        let l = wachspress(&s, 0.5, 0.5).unwrap();
        let g = lift_g(&spec, &l).unwrap();
        assert!((g - 0.5 * (0.25 * std::f64::consts::PI).sin()).abs() < 1e-15);
        let c = coons_square(&spec, 0.5, 0.5).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        assert!(((c - g) - 0.146_446_609_4).abs() < 1e-9);
        for p in random_interior(&s, 100, 1) {
            let l = wachspress(&s, p[0], p[1]).unwrap();
            let pi = std::f64::consts::PI;
            let closed = l[2] * (pi * l[3]).sin() + l[3] * (pi * l[2]).sin();
            assert!((lift_g(&spec, &l).unwrap() - closed).abs() < 1e-14);
            let coons = coons_square(&spec, p[0], p[1]).unwrap();
            assert!((coons - p[1] * (pi * p[0]).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_and_affine_data_are_reproduced() {
        let pent = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 1.0], [0.0, 0.5]]).unwrap();
        let c = BoundarySpec::constant(&pent, 2.5);
        let aff = BoundarySpec::parse(&pent, &["1 + 2*x - 3*y"; 5]).unwrap();
        for p in random_interior(&pent, 100, 2) {
            let l = wachspress(&pent, p[0], p[1]).unwrap();
            assert!((lift_g(&c, &l).unwrap() - 2.5).abs() < 1e-14);
            assert!((lift_g(&aff, &l).unwrap() - (1.0 + 2.0 * p[0] - 3.0 * p[1])).abs() < 1e-12);
        }
        assert_eq!(coons_square(&c, 0.1, 0.2), Err(TransfiniteError::DomainMismatch));
        let sq = BoundarySpec::constant(&Polygon::unit_square(), -1.0);
        assert!((coons_square(&sq, 0.3, 0.8).unwrap() + 1.0).abs() < 1e-15);
    }

    fn field(mu: &[f64]) -> Result<f64, ()> {
        Ok(mu.iter().enumerate().map(|(k, m)| ((k + 1) as f64 * m).sin() + m * m * k as f64).sum::<f64>().exp())
    }

    #[test]
    fn lift_field_properties() {
        let pent = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 1.0], [0.0, 0.5]]).unwrap();
        for p in random_interior(&pent, 50, 4) {
            let l = wachspress(&pent, p[0], p[1]).unwrap();
            let one = lift_field(&l, |_| Ok::<f64, ()>(1.0)).unwrap();
            assert!((one - 1.0).abs() < 1e-14);
            let f2 = |mu: &[f64]| Ok::<f64, ()>(mu[0] * mu[2] - mu[1]);
            let lhs = lift_field(&l, |mu| Ok::<f64, ()>(2.0 * field(mu).unwrap() - 3.0 * f2(mu).unwrap())).unwrap();
            let rhs = 2.0 * lift_field(&l, field).unwrap() - 3.0 * lift_field(&l, f2).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        for e in 0..5 {
            for k in 0..=20 {
                let q = pent.edge_point(e, k as f64 / 20.0);
                let l = wachspress_global(&pent, q[0], q[1]).unwrap();
                let lf = lift_field(&l, field).unwrap();
                assert!((lf - field(&l).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn g_is_lift_of_boundary_composition() {
        // F(mu) = B(sum mu_j x_j) lifts to g because projections land on edges.
        let quad = Polygon::new(vec![[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let spec = BoundarySpec::parse(&quad, &["1 + x", "1 + x", "1 + x", "1 + x"]).unwrap();
        for p in random_interior(&quad, 20, 9) {
            let l = wachspress(&quad, p[0], p[1]).unwrap();
            let via_field = lift_field(&l, |mu: &[f64]| {
                let x: f64 = mu.iter().zip(quad.vertices()).map(|(m, v)| m * v[0]).sum();
                Ok::<f64, ()>(1.0 + x)
            })
            .unwrap();
            assert!((via_field - lift_g(&spec, &l).unwrap()).abs() < 1e-13);
        }
    }
}
