use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar algebra shared by plain `f64` and [`Jet2`].
///
/// Geometry, expressions and networks are written once against this trait so the
/// same code path yields values and, over jets, spatial derivatives.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Finite in every component.
    fn is_finite(self) -> bool;

    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }

    /// General power `self^e`.
    fn pow(self, e: Self) -> Self {
        (self.ln() * e).exp()
    }

    fn recip(self) -> Self {
        Self::constant(1.0) / self
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn pow(self, e: Self) -> Self {
        self.powf(e)
    }
}

/// Elementary unary functions with derivatives up to third order.
///
/// Jets need the first two derivatives; the reverse sweep through a jet needs
/// the third as well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Sin,
    Cos,
    Exp,
    Ln,
    Tanh,
    Sqrt,
    Recip,
    Powi(i32),
    /// `sin(w z)`.
    ScaledSin(f64),
}

impl Unary {
    /// `[f, f', f'', f''']` at `v`.
    pub fn derivs(self, v: f64) -> [f64; 4] {
        match self {
            Unary::Sin => {
                let (s, c) = v.sin_cos();
                [s, c, -s, -c]
            }
            Unary::Cos => {
                let (s, c) = v.sin_cos();
                [c, -s, -c, s]
            }
            Unary::Exp => {
                let e = v.exp();
                [e, e, e, e]
            }
            Unary::Ln => {
                let r = 1.0 / v;
                [v.ln(), r, -r * r, 2.0 * r * r * r]
            }
            Unary::Tanh => {
                let t = v.tanh();
                let d1 = 1.0 - t * t;
                let d2 = -2.0 * t * d1;
                let d3 = -2.0 * d1 * (1.0 - 3.0 * t * t);
                [t, d1, d2, d3]
            }
            Unary::Sqrt => {
                let s = v.sqrt();
                let d1 = 0.5 / s;
                let d2 = -0.5 * d1 / v;
                let d3 = -1.5 * d2 / v;
                [s, d1, d2, d3]
            }
            Unary::Recip => {
                let r = 1.0 / v;
                [r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r]
            }
            Unary::Powi(n) => {
                let nf = n as f64;
                let p = |k: i32| if n - k == 0 { 1.0 } else { v.powi(n - k) };
                let d1 = if n == 0 { 0.0 } else { nf * p(1) };
                let d2 = if n == 0 || n == 1 { 0.0 } else { nf * (nf - 1.0) * p(2) };
                let d3 = if (0..=2).contains(&n) {
                    0.0
                } else {
                    nf * (nf - 1.0) * (nf - 2.0) * p(3)
                };
                [p(0), d1, d2, d3]
            }
            Unary::ScaledSin(w) => {
                let (s, c) = (w * v).sin_cos();
                [s, w * c, -w * w * s, -w * w * w * c]
            }
        }
    }
}

/// Second-order two-variable jet: value, gradient and Hessian of a scalar field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    pub gx: f64,
    pub gy: f64,
    pub hxx: f64,
    pub hxy: f64,
    pub hyy: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 { v: 0.0, gx: 0.0, gy: 0.0, hxx: 0.0, hxy: 0.0, hyy: 0.0 };

    pub fn new(v: f64, gx: f64, gy: f64, hxx: f64, hxy: f64, hyy: f64) -> Self {
        Jet2 { v, gx, gy, hxx, hxy, hyy }
    }

    pub fn cst(c: f64) -> Self {
        Jet2 { v: c, ..Jet2::ZERO }
    }

    pub fn var_x(x: f64) -> Self {
        Jet2 { v: x, gx: 1.0, ..Jet2::ZERO }
    }

    pub fn var_y(y: f64) -> Self {
        Jet2 { v: y, gy: 1.0, ..Jet2::ZERO }
    }

    /// Seeded coordinate pair at `(x, y)`.
    pub fn seed(x: f64, y: f64) -> (Jet2, Jet2) {
        (Jet2::var_x(x), Jet2::var_y(y))
    }

    pub fn laplacian(&self) -> f64 {
        self.hxx + self.hyy
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.gx * self.gx + self.gy * self.gy
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.v, self.gx, self.gy, self.hxx, self.hxy, self.hyy]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Jet2::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// Compose with a scalar function given `f(v), f'(v), f''(v)`.
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Jet2 {
            v: f0,
            gx: f1 * self.gx,
            gy: f1 * self.gy,
            hxx: f2 * self.gx * self.gx + f1 * self.hxx,
            hxy: f2 * self.gx * self.gy + f1 * self.hxy,
            hyy: f2 * self.gy * self.gy + f1 * self.hyy,
        }
    }

    pub fn apply(self, op: Unary) -> Self {
        let [f0, f1, f2, _] = op.derivs(self.v);
        self.chain(f0, f1, f2)
    }

    fn map2(self, o: Jet2, f: impl Fn(f64, f64) -> f64) -> Jet2 {
        Jet2::from_array(std::array::from_fn(|k| f(self.to_array()[k], o.to_array()[k])))
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        self.map2(o, |a, b| a + b)
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self.map2(o, |a, b| a - b)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        Jet2::from_array(self.to_array().map(|a| -a))
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            gx: self.gx * o.v + self.v * o.gx,
            gy: self.gy * o.v + self.v * o.gy,
            hxx: self.hxx * o.v + 2.0 * self.gx * o.gx + self.v * o.hxx,
            hxy: self.hxy * o.v + self.gx * o.gy + self.gy * o.gx + self.v * o.hxy,
            hyy: self.hyy * o.v + 2.0 * self.gy * o.gy + self.v * o.hyy,
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.apply(Unary::Recip)
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64) -> Self {
        Jet2::cst(c)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.apply(Unary::Sin)
    }
    fn cos(self) -> Self {
        self.apply(Unary::Cos)
    }
    fn exp(self) -> Self {
        self.apply(Unary::Exp)
    }
    fn ln(self) -> Self {
        self.apply(Unary::Ln)
    }
    fn tanh(self) -> Self {
        self.apply(Unary::Tanh)
    }
    fn sqrt(self) -> Self {
        self.apply(Unary::Sqrt)
    }
    fn powi(self, n: i32) -> Self {
        self.apply(Unary::Powi(n))
    }
    fn is_finite(self) -> bool {
        self.to_array().iter().all(|a| a.is_finite())
    }
    fn scale(self, c: f64) -> Self {
        Jet2::from_array(self.to_array().map(|a| a * c))
    }
    fn recip(self) -> Self {
        self.apply(Unary::Recip)
    }
    fn pow(self, e: Self) -> Self {
        let constant_exponent = e.to_array()[1..].iter().all(|&d| d == 0.0);
        if constant_exponent && e.v.fract() == 0.0 && e.v.abs() < 2f64.powi(31) {
            self.powi(e.v as i32)
        } else {
            (self.ln() * e).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds() {
        let (x, y) = Jet2::seed(2.0, 3.0);
        let p = x * y;
        assert_eq!(p, Jet2::new(6.0, 3.0, 2.0, 0.0, 1.0, 0.0));
        let t = Jet2::var_x(0.0).tanh();
        assert_eq!((t.v, t.gx, t.hxx), (0.0, 1.0, 0.0));
        let a = 0.7;
        assert!((Jet2::var_x(a).sin().hxx + a.sin()).abs() < 1e-15);
    }

    #[test]
    fn exp_sin_product_matches_analytic() {
        // f = exp(sin(x) y)
        for &(x0, y0) in &[(0.3, -0.4), (1.2, 0.8), (-2.0, 0.1)] {
            let (x, y) = Jet2::seed(x0, y0);
            let f = (x.sin() * y).exp();
            let e = (x0.sin() * y0).exp();
            let (s, c) = (f64::sin(x0), f64::cos(x0));
            assert!((f.gx - e * c * y0).abs() < 1e-12);
            assert!((f.gy - e * s).abs() < 1e-12);
            assert!((f.hxx - e * (c * c * y0 * y0 - s * y0)).abs() < 1e-12);
            assert!((f.hyy - e * s * s).abs() < 1e-12);
            assert!((f.hxy - e * (c + c * y0 * s)).abs() < 1e-12);
        }
    }

    #[test]
    fn third_derivatives_match_differences() {
        let ops = [
            Unary::Sin,
            Unary::Cos,
            Unary::Exp,
            Unary::Ln,
            Unary::Tanh,
            Unary::Sqrt,
            Unary::Recip,
            Unary::Powi(3),
            Unary::Powi(-2),
            Unary::ScaledSin(3.0),
        ];
        let v = 0.73;
        let h = 1e-5;
        for op in ops {
            let d = op.derivs(v);
            let (p, m) = (op.derivs(v + h), op.derivs(v - h));
            for k in 0..3 {
                let fd = (p[k] - m[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-6 * (1.0 + d[k + 1].abs()), "{op:?} order {k}");
            }
        }
    }

    #[test]
    fn division_and_powi_agree() {
        let (x, y) = Jet2::seed(1.3, 0.4);
        let a = (x + y) / (x * y);
        let b = (x + y) * (x * y).powi(-1);
        for (u, w) in a.to_array().iter().zip(b.to_array()) {
            assert!((u - w).abs() < 1e-12);
        }
    }
}
