use super::polygon::{GeometryError, Point, Polygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How collocation or test points are laid out in a polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// `nx x ny` lattice on `[delta, 1-delta]^2` pushed through the bilinear map of a quad.
    GridQuad { nx: usize, ny: usize, #[serde(default)] delta: f64 },
    /// Unique vertices of the fan triangulation refined `level` times.
    /// `grading < 1` shrinks ring spacing toward the boundary.
    Refine { level: u32, #[serde(default = "one")] grading: f64 },
    /// `count` uniform points strictly inside, from a seeded ChaCha8 stream.
    Random { count: usize },
    /// `count` uniform points on the boundary, seeded.
    Boundary { count: usize },
}

fn one() -> f64 {
    1.0
}

/// Bilinear isoparametric map of the unit square onto a quad.
pub fn bilinear_map(quad: &Polygon, s: f64, t: f64) -> Point {
    let n = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
    let mut p = [0.0, 0.0];
    for (k, w) in n.iter().enumerate() {
        let v = quad.vertex(k);
        p[0] += w * v[0];
        p[1] += w * v[1];
    }
    p
}

fn lattice(n: usize, delta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.5];
    }
    (0..n).map(|i| delta + (1.0 - 2.0 * delta) * i as f64 / (n - 1) as f64).collect()
}

/// Radii of the `m + 1` rings, from 0 at the centre to 1 on the boundary,
/// with successive spacings in ratio `q`.
fn ring_radii(m: usize, q: f64) -> Vec<f64> {
    let steps: Vec<f64> = (0..m).map(|j| q.powi(j as i32)).collect();
    let total: f64 = steps.iter().sum();
    let mut r = vec![0.0];
    let mut acc = 0.0;
    for s in steps {
        acc += s;
        r.push(acc / total);
    }
    r[m] = 1.0;
    r
}

pub fn sample_points(poly: &Polygon, strategy: &Sampling, seed: u64) -> Result<Vec<Point>, GeometryError> {
    match *strategy {
        Sampling::GridQuad { nx, ny, delta } => {
            if poly.n() != 4 {
                return Err(GeometryError::StrategyMismatch { strategy: "grid_quad", n: poly.n() });
            }
            if nx == 0 || ny == 0 || !(0.0..0.5).contains(&delta) {
                return Err(GeometryError::InvalidSampling(format!(
                    "grid_quad needs nx, ny >= 1 and delta in [0, 0.5), got {nx}, {ny}, {delta}"
                )));
            }
            let (xs, ys) = (lattice(nx, delta), lattice(ny, delta));
            Ok(ys.iter().flat_map(|&t| xs.iter().map(move |&s| (s, t))).map(|(s, t)| bilinear_map(poly, s, t)).collect())
        }
        Sampling::Refine { level, grading } => {
            if level > 12 || !(grading > 0.0 && grading.is_finite()) {
                return Err(GeometryError::InvalidSampling(format!(
                    "refine needs level <= 12 and grading > 0, got {level}, {grading}"
                )));
            }
            let m = 1usize << level;
            let radii = ring_radii(m, grading);
            let c = poly.centroid();
            let mut pts = vec![c];
            for i in 0..poly.n() {
                let (v0, v1) = (poly.vertex(i), poly.vertex(i + 1));
                for a in 1..=m {
                    for b in 0..=(m - a) {
                        let k = a + b;
                        let (wa, wb) = (a as f64 / k as f64, b as f64 / k as f64);
                        let r = radii[k];
                        let q = [wa * v0[0] + wb * v1[0] - c[0], wa * v0[1] + wb * v1[1] - c[1]];
                        pts.push([c[0] + r * q[0], c[1] + r * q[1]]);
                    }
                }
            }
            Ok(pts)
        }
        Sampling::Random { count } => Ok(random_interior(poly, count, seed)),
        Sampling::Boundary { count } => Ok(random_boundary(poly, count, seed).into_iter().map(|b| b.0).collect()),
    }
}

/// Rejection sampling in the bounding box; keeps points at least `1e-9` diameters from the boundary.
pub fn random_interior(poly: &Polygon, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vs = poly.vertices();
    let lo = vs.iter().fold([f64::INFINITY; 2], |a, v| [a[0].min(v[0]), a[1].min(v[1])]);
    let hi = vs.iter().fold([f64::NEG_INFINITY; 2], |a, v| [a[0].max(v[0]), a[1].max(v[1])]);
    let margin = 1e-9 * poly.diameter();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
        if poly.distances(p[0], p[1]).iter().all(|&h| h > margin) {
            out.push(p);
        }
    }
    out
}

/// Uniform random points on the boundary, returned with their edge index and parameter.
pub fn random_boundary(poly: &Polygon, count: usize, seed: u64) -> Vec<(Point, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let e = rng.random_range(0..poly.n());
            let s: f64 = rng.random();
            (poly.edge_point(e, s), e, s)
        })
        .collect()
}

/// Fan triangulation with each triangle split uniformly into `4^level` children.
pub fn refine_triangles(poly: &Polygon, level: u32) -> Vec<[Point; 3]> {
    let m = 1usize << level;
    let mut out = Vec::with_capacity(poly.n() * m * m);
    for [c, v0, v1] in poly.fan_triangulate() {
        let p = |a: usize, b: usize| {
            let (wa, wb) = (a as f64 / m as f64, b as f64 / m as f64);
            [c[0] + wa * (v0[0] - c[0]) + wb * (v1[0] - c[0]), c[1] + wa * (v0[1] - c[1]) + wb * (v1[1] - c[1])]
        };
        for a in 0..m {
            for b in 0..(m - a) {
                out.push([p(a, b), p(a + 1, b), p(a, b + 1)]);
                if a + b + 1 < m {
                    out.push([p(a + 1, b), p(a + 1, b + 1), p(a, b + 1)]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{triangle_area, PointLocation, BOUNDARY_TOL};

    fn pentagon() -> Polygon {
        Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 1.0], [0.0, 0.5]]).unwrap()
    }

    #[test]
    fn grid_quad_examples() {
        let s = Polygon::unit_square();
        let pts = sample_points(&s, &Sampling::GridQuad { nx: 10, ny: 10, delta: 0.01 }, 0).unwrap();
        assert_eq!(pts.len(), 100);
        let all: Vec<f64> = pts.iter().flatten().copied().collect();
        assert!((all.iter().cloned().fold(f64::INFINITY, f64::min) - 0.01).abs() < 1e-15);
        assert!((all.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 0.99).abs() < 1e-15);
        let corners = sample_points(&s, &Sampling::GridQuad { nx: 2, ny: 2, delta: 0.0 }, 0).unwrap();
        assert_eq!(corners, vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let err = sample_points(&pentagon(), &Sampling::GridQuad { nx: 2, ny: 2, delta: 0.0 }, 0);
        assert!(matches!(err, Err(GeometryError::StrategyMismatch { n: 5, .. })));
    }

    /// Brute-force count of distinct subdivision vertices.
    fn dedup_count(poly: &Polygon, level: u32) -> usize {
        let mut keys: Vec<(i64, i64)> = refine_triangles(poly, level)
            .iter()
            .flatten()
            .map(|p| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }

    #[test]
    fn refine_counts_unique_vertices() {
        let p = pentagon();
        let pts = sample_points(&p, &Sampling::Refine { level: 4, grading: 1.0 }, 0).unwrap();
        assert_eq!(pts.len(), 681);
        assert_eq!(pts.len(), dedup_count(&p, 4));
        assert_eq!(refine_triangles(&p, 4).len(), 5 * 4usize.pow(4));
        for level in 0..4 {
            let s = Polygon::unit_square();
            let n = sample_points(&s, &Sampling::Refine { level, grading: 1.0 }, 0).unwrap().len();
            assert_eq!(n, dedup_count(&s, level));
        }
    }

    #[test]
    fn refine_points_in_closure_and_graded() {
        let p = pentagon();
        for grading in [1.0, 0.8] {
            let pts = sample_points(&p, &Sampling::Refine { level: 3, grading }, 0).unwrap();
            for q in &pts {
                assert_ne!(p.locate(*q, BOUNDARY_TOL), PointLocation::Exterior);
            }
        }
        let r = ring_radii(8, 0.5);
        assert!(r.windows(3).all(|w| w[2] - w[1] < w[1] - w[0]));
        assert_eq!(r[8], 1.0);
    }

    #[test]
    fn refined_triangles_tile_the_polygon() {
        let p = pentagon();
        let tris = refine_triangles(&p, 3);
        let total: f64 = tris.iter().map(|t| triangle_area(t[0], t[1], t[2])).sum();
        assert!((total - p.area()).abs() < 1e-12);
        assert!(tris.iter().all(|t| triangle_area(t[0], t[1], t[2]) > 0.0));
    }

    #[test]
    fn random_is_seeded_and_interior() {
        let p = pentagon();
        let a = sample_points(&p, &Sampling::Random { count: 200 }, 7).unwrap();
        let b = sample_points(&p, &Sampling::Random { count: 200 }, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|q| p.locate(*q, BOUNDARY_TOL) == PointLocation::Interior));
        let c = sample_points(&p, &Sampling::Random { count: 200 }, 8).unwrap();
        assert_ne!(a, c);
        let b = sample_points(&p, &Sampling::Boundary { count: 300 }, 7).unwrap();
        assert!(b.iter().all(|q| matches!(p.locate(*q, 1e-14), PointLocation::Boundary { .. })));
    }

    #[test]
    fn sampling_deserializes() {
        let s: Sampling = serde_json::from_str(r#"{"strategy":"refine","level":3}"#).unwrap();
        assert_eq!(s, Sampling::Refine { level: 3, grading: 1.0 });
    }
}
