//! Wachspress coordinates on convex polygons and mean value coordinates on
//! quadrilaterals, generic over the scalar algebra.

use crate::autodiff::{Jet2, Scalar};
use crate::geometry::{Point, Polygon};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaryError {
    #[error("point ({0}, {1}) is not strictly inside the polygon")]
    NotInterior(f64, f64),
    #[error("point ({0}, {1}) is outside the polygon")]
    OutsidePolygon(f64, f64),
    #[error("quadrilateral system is singular")]
    SingularSystem,
    #[error("this construction needs a quadrilateral, got {0} vertices")]
    NotQuad(usize),
}

/// Coordinate family used by lifting and export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    #[default]
    Wachspress,
    /// Quadrilaterals only.
    MeanValue,
}

/// Below this many diameters from the boundary the total function switches to the product form.
pub const GLOBAL_SWITCH: f64 = 1e-9;

fn normalize<S: Scalar>(w: Vec<S>) -> Vec<S> {
    let total = w.iter().fold(S::constant(0.0), |a, &b| a + b);
    let inv = total.recip();
    w.into_iter().map(|wi| wi * inv).collect()
}

fn min_h<S: Scalar>(hs: &[S]) -> f64 {
    hs.iter().map(|h| h.value()).fold(f64::INFINITY, f64::min)
}

/// `w_i = det(n_{i-1}, n_i) / (h_{i-1} h_i)`; strictly interior points only.
pub fn wachspress_interior<S: Scalar>(poly: &Polygon, x: S, y: S) -> Result<Vec<S>, BaryError> {
    let n = poly.n();
    let hs = poly.distances(x, y);
    if min_h(&hs) <= crate::geometry::BOUNDARY_TOL * poly.diameter() {
        return Err(BaryError::NotInterior(x.value(), y.value()));
    }
    let w = (0..n).map(|i| (hs[(i + n - 1) % n] * hs[i]).recip().scale(poly.normal_det(i))).collect();
    Ok(normalize(w))
}

/// Product form `w_i = det(n_{i-1}, n_i) prod_{j != i-1, i} h_j / diam`, valid on the closure.
pub fn wachspress_global<S: Scalar>(poly: &Polygon, x: S, y: S) -> Result<Vec<S>, BaryError> {
    let n = poly.n();
    let d = poly.diameter();
    let hs: Vec<S> = poly.distances(x, y).into_iter().map(|h| h.scale(1.0 / d)).collect();
    if min_h(&hs) < -crate::geometry::BOUNDARY_TOL {
        return Err(BaryError::OutsidePolygon(x.value(), y.value()));
    }
    let w = (0..n)
        .map(|i| {
            let prev = (i + n - 1) % n;
            (0..n)
                .filter(|&j| j != prev && j != i)
                .fold(S::constant(poly.normal_det(i)), |acc, j| acc * hs[j])
        })
        .collect();
    Ok(normalize(w))
}

/// Total Wachspress coordinates on the closed polygon.
pub fn wachspress<S: Scalar>(poly: &Polygon, x: S, y: S) -> Result<Vec<S>, BaryError> {
    let hs = poly.distances(x, y);
    if min_h(&hs) < GLOBAL_SWITCH * poly.diameter() {
        wachspress_global(poly, x, y)
    } else {
        wachspress_interior(poly, x, y)
    }
}

/// Gaussian elimination with partial pivoting on values.
fn solve4<S: Scalar>(mut a: [[S; 4]; 4], mut b: [S; 4]) -> Result<[S; 4], BaryError> {
    let scale = a.iter().flatten().map(|v| v.value().abs()).fold(0.0, f64::max);
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].value().abs().total_cmp(&a[j][col].value().abs()))
            .expect("non-empty range");
        if a[piv][col].value().abs() <= 1e-14 * scale {
            return Err(BaryError::SingularSystem);
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = a[col][col].recip();
        for r in col + 1..4 {
            let f = a[r][col] * inv;
            for c in col..4 {
                a[r][c] = a[r][c] - f * a[col][c];
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = [S::constant(0.0); 4];
    for r in (0..4).rev() {
        let mut s = b[r];
        for c in r + 1..4 {
            s = s - a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

/// Solve `sum l = 1`, `sum l x_i = x`, `sum (-1)^i rho_i l_i = 0`.
fn quad_system<S: Scalar>(quad: &Polygon, x: S, y: S, rho: [S; 4]) -> Result<Vec<S>, BaryError> {
    let one = S::constant(1.0);
    let v = quad.vertices();
    let c = |k: usize, d: usize| S::constant(v[k][d]);
    let a = [
        [one, one, one, one],
        [c(0, 0), c(1, 0), c(2, 0), c(3, 0)],
        [c(0, 1), c(1, 1), c(2, 1), c(3, 1)],
        [rho[0], -rho[1], rho[2], -rho[3]],
    ];
    Ok(solve4(a, [one, x, y, S::constant(0.0)])?.to_vec())
}

fn check_quad<S: Scalar>(quad: &Polygon, x: S, y: S) -> Result<(), BaryError> {
    if quad.n() != 4 {
        return Err(BaryError::NotQuad(quad.n()));
    }
    if min_h(&quad.distances(x, y)) < -crate::geometry::BOUNDARY_TOL * quad.diameter() {
        return Err(BaryError::OutsidePolygon(x.value(), y.value()));
    }
    Ok(())
}

/// Wachspress coordinates of a quad from the 4x4 system with `rho_i = A_{i-1} A_i`.
pub fn wachspress_quad_system<S: Scalar>(quad: &Polygon, x: S, y: S) -> Result<Vec<S>, BaryError> {
    check_quad(quad, x, y)?;
    let d2 = quad.diameter() * quad.diameter();
    let areas: Vec<S> = (0..4).map(|i| quad.edge_area(i, x, y).scale(1.0 / d2)).collect();
    let rho = std::array::from_fn(|i| areas[(i + 3) % 4] * areas[i]);
    quad_system(quad, x, y, rho)
}

/// Mean value coordinates of a quad from the same system with `rho_i = |x - x_i|`.
pub fn meanvalue_quad<S: Scalar>(quad: &Polygon, x: S, y: S) -> Result<Vec<S>, BaryError> {
    check_quad(quad, x, y)?;
    let d = quad.diameter();
    let rho = std::array::from_fn(|i| {
        let v = quad.vertex(i);
        let dx = (x - S::constant(v[0])).scale(1.0 / d);
        let dy = (y - S::constant(v[1])).scale(1.0 / d);
        (dx * dx + dy * dy).sqrt()
    });
    quad_system(quad, x, y, rho)
}

pub fn coordinates<S: Scalar>(kind: CoordKind, poly: &Polygon, x: S, y: S) -> Result<Vec<S>, BaryError> {
    match kind {
        CoordKind::Wachspress => wachspress(poly, x, y),
        CoordKind::MeanValue => meanvalue_quad(poly, x, y),
    }
}

/// Coordinates with spatial jets seeded at `p`.
pub fn coordinates_jet(kind: CoordKind, poly: &Polygon, p: Point) -> Result<Vec<Jet2>, BaryError> {
    let (x, y) = Jet2::seed(p[0], p[1]);
    coordinates(kind, poly, x, y)
}
