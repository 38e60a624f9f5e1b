use super::polygon::{triangle_area, GeometryError, Point};

/// Symmetric triangle rule: barycentric points and weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub order: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

struct Builder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Builder {
    fn new() -> Self {
        Builder { points: Vec::new(), weights: Vec::new() }
    }

    fn centroid(mut self, w: f64) -> Self {
        self.points.push([1.0 / 3.0; 3]);
        self.weights.push(w);
        self
    }

    /// The three permutations of `(a, b, b)` with `b = (1 - a) / 2`.
    fn orbit3(mut self, a: f64, w: f64) -> Self {
        let b = 0.5 * (1.0 - a);
        for p in [[a, b, b], [b, a, b], [b, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    /// The six permutations of `(a, b, 1 - a - b)`.
    fn orbit6(mut self, a: f64, b: f64, w: f64) -> Self {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    fn build(self, order: usize) -> TriangleRule {
        TriangleRule { order, points: self.points, weights: self.weights }
    }
}

/// Rule exact for polynomials of total degree `order` (1..=7).
///
/// Orders 1, 2, 4, 5 and 6 are the Strang-Fix / Dunavant symmetric rules with
/// 1, 3, 6, 7 and 12 points; order 3 uses the 6-point equal-weight rule (no
/// negative weights); order 7 uses the 13-point rule. Abscissae were refined to
/// full double precision by Newton iteration on the moment equations.
pub fn triangle_quadrature(order: usize) -> Result<TriangleRule, GeometryError> {
    let b = Builder::new();
    let rule = match order {
        1 => b.centroid(1.0),
        2 => b.orbit3(2.0 / 3.0, 1.0 / 3.0),
        3 => b.orbit6(0.659_027_622_374_092_215_18, 0.231_933_368_553_030_572_5, 1.0 / 6.0),
        4 => b
            .orbit3(0.108_103_018_168_070_227_36, 0.223_381_589_678_011_465_7)
            .orbit3(0.816_847_572_980_458_513_08, 0.109_951_743_655_321_867_64),
        5 => b
            .centroid(0.225)
            .orbit3(0.059_715_871_789_769_820_459, 0.132_394_152_788_506_180_74)
            .orbit3(0.797_426_985_353_087_322_4, 0.125_939_180_544_827_152_6),
        6 => b
            .orbit3(0.501_426_509_658_179_157_42, 0.116_786_275_726_379_366_03)
            .orbit3(0.873_821_971_016_995_543_32, 0.050_844_906_370_206_816_921)
            .orbit6(
                0.053_145_049_844_816_947_353,
                0.310_352_451_033_784_405_42,
                0.082_851_075_618_373_575_194,
            ),
        7 => b
            .centroid(-0.149_570_044_467_681_750_63)
            .orbit3(0.479_308_067_841_920_346_15, 0.175_615_257_433_207_811_75)
            .orbit3(0.869_739_794_195_568_376_92, 0.053_347_235_608_838_491_27)
            .orbit6(
                0.048_690_315_425_316_411_793,
                0.312_865_496_004_873_861_41,
                0.077_113_760_890_257_140_26,
            ),
        _ => return Err(GeometryError::UnsupportedOrder(order)),
    };
    Ok(rule.build(order))
}

impl TriangleRule {
    /// Physical points and weights (area-scaled) on triangle `t`.
    pub fn map(&self, t: &[Point; 3]) -> Vec<(Point, f64)> {
        let area = triangle_area(t[0], t[1], t[2]).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| {
                let x = l[0] * t[0][0] + l[1] * t[1][0] + l[2] * t[2][0];
                let y = l[0] * t[0][1] + l[1] * t[1][1] + l[2] * t[2][1];
                ([x, y], w * area)
            })
            .collect()
    }

    pub fn integrate(&self, t: &[Point; 3], f: impl Fn(Point) -> f64) -> f64 {
        self.map(t).into_iter().map(|(p, w)| w * f(p)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn weights_sum_to_one_and_points_inside() {
        for q in 1..=7 {
            let r = triangle_quadrature(q).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-15, "order {q}: {s}");
            for p in &r.points {
                assert!(p.iter().all(|&c| c > 0.0));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_for_monomials_up_to_order() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for q in 1..=7usize {
            let r = triangle_quadrature(q).unwrap();
            for i in 0..=q as u32 {
                for j in 0..=(q as u32 - i) {
                    let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                    let got = r.integrate(&tri, |p| p[0].powi(i as i32) * p[1].powi(j as i32));
                    assert!((got - exact).abs() <= 1e-12 * exact, "order {q} x^{i} y^{j}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn order_two_integrates_x_squared() {
        let r = triangle_quadrature(2).unwrap();
        let got = r.integrate(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], |p| p[0] * p[0]);
        assert!((got - 1.0 / 12.0).abs() < 1e-14);
        assert_eq!(triangle_quadrature(1).unwrap().points, vec![[1.0 / 3.0; 3]]);
    }

    #[test]
    fn unsupported_orders() {
        assert_eq!(triangle_quadrature(0), Err(GeometryError::UnsupportedOrder(0)));
        assert_eq!(triangle_quadrature(8), Err(GeometryError::UnsupportedOrder(8)));
    }
}
