use super::OptimError;
use crate::loss::LossError;
use std::collections::VecDeque;

/// Function value and gradient, `Err` for points where the objective is undefined.
pub type Eval<'f> = dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>), LossError> + 'f;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { memory: 10, c1: 1e-4, c2: 0.9, max_evals: 25 }
    }
}

/// What an accepted step did, in terms of the objective the optimizer saw.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub alpha: f64,
    pub f0: f64,
    pub f1: f64,
    /// Directional derivatives at the start and end of the step.
    pub slope0: f64,
    pub slope1: f64,
    pub evals: usize,
    /// The step came from the steepest-descent retry.
    pub restarted: bool,
}

impl StepInfo {
    pub fn satisfies_wolfe(&self, c1: f64, c2: f64) -> bool {
        self.f1 <= self.f0 + c1 * self.alpha * self.slope0 && self.slope1.abs() <= c2 * self.slope0.abs()
    }
}

#[derive(Debug, Clone)]
pub struct Lbfgs {
    cfg: LbfgsConfig,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    g: Vec<f64>,
}

/// Cubic minimizer through two points with slopes, safeguarded into the middle 80%.
fn cubic_step(a: &Trial, b: &Trial) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a.alpha, b.alpha) } else { (b.alpha, a.alpha) };
    let mid = 0.5 * (lo + hi);
    if !(a.f.is_finite() && b.f.is_finite()) {
        return mid;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    let w = hi - lo;
    if t.is_finite() && t >= lo + 0.1 * w && t <= hi - 0.1 * w {
        t
    } else {
        mid
    }
}

impl Lbfgs {
    pub fn new(cfg: LbfgsConfig) -> Self {
        Lbfgs { cfg, s: VecDeque::new(), y: VecDeque::new() }
    }

    pub fn config(&self) -> &LbfgsConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    pub fn history_len(&self) -> usize {
        self.s.len()
    }

    /// Two-loop recursion: `-H g` with the usual `s.y / y.y` initial scaling.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut a = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            a[i] = rho * dot(&self.s[i], &q);
            q.iter_mut().zip(&self.y[i]).for_each(|(q, y)| *q -= a[i] * y);
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|q| *q *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let b = rho * dot(&self.y[i], &q);
            q.iter_mut().zip(&self.s[i]).for_each(|(q, s)| *q += (a[i] - b) * s);
        }
        q.iter_mut().for_each(|q| *q = -*q);
        q
    }

    fn probe(eval: &mut Eval<'_>, theta: &[f64], d: &[f64], alpha: f64) -> Result<Trial, OptimError> {
        let x: Vec<f64> = theta.iter().zip(d).map(|(t, d)| t + alpha * d).collect();
        match eval(&x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Ok(Trial { alpha, f, slope: dot(&g, d), g }),
            Ok(_) | Err(LossError::NonFiniteLoss(_)) | Err(LossError::Ad(_)) => {
                Ok(Trial { alpha, f: f64::INFINITY, slope: f64::NAN, g: Vec::new() })
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Strong Wolfe search along `d`; `None` if no acceptable step was found.
    fn line_search(&self, eval: &mut Eval<'_>, theta: &[f64], f0: f64, slope0: f64, d: &[f64], alpha0: f64) -> Result<Option<(Trial, usize)>, OptimError> {
        let LbfgsConfig { c1, c2, max_evals, .. } = self.cfg;
        let armijo = |t: &Trial| t.f <= f0 + c1 * t.alpha * slope0;
        let curvature = |t: &Trial| t.slope.abs() <= -c2 * slope0;
        let mut prev = Trial { alpha: 0.0, f: f0, slope: slope0, g: Vec::new() };
        let mut alpha = alpha0;
        let mut evals = 0;
        let (mut lo, mut hi) = loop {
            if evals >= max_evals {
                return Ok(None);
            }
            let t = Self::probe(eval, theta, d, alpha)?;
            evals += 1;
            if !armijo(&t) || (evals > 1 && t.f >= prev.f) {
                break (prev, t);
            }
            if curvature(&t) {
                return Ok(Some((t, evals)));
            }
            if t.slope >= 0.0 {
                break (t, prev);
            }
            alpha = 2.0 * t.alpha;
            prev = t;
        };
        while evals < max_evals {
            let t = Self::probe(eval, theta, d, cubic_step(&lo, &hi))?;
            evals += 1;
            if !armijo(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if curvature(&t) {
                    return Ok(Some((t, evals)));
                }
                if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
        Ok(None)
    }

    /// One iteration from `theta` with value `f` and gradient `g`, all updated in place.
    /// On a failed search the history is dropped and steepest descent is tried once.
    pub fn step(&mut self, theta: &mut [f64], f: &mut f64, g: &mut Vec<f64>, eval: &mut Eval<'_>) -> Result<StepInfo, OptimError> {
        let gnorm = dot(g, g).sqrt();
        if gnorm == 0.0 {
            return Err(OptimError::LineSearchFailed);
        }
        for restarted in [false, true] {
            if restarted && self.s.is_empty() {
                break;
            }
            if restarted {
                self.reset();
            }
            let mut d = self.direction(g);
            let mut slope0 = dot(&d, g);
            if !(slope0 < 0.0) {
                self.reset();
                d = g.iter().map(|v| -v).collect();
                slope0 = -gnorm * gnorm;
            }
            let alpha0 = if self.s.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
            if let Some((t, evals)) = self.line_search(eval, theta, *f, slope0, &d, alpha0)? {
                let s: Vec<f64> = d.iter().map(|d| t.alpha * d).collect();
                let y: Vec<f64> = t.g.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                    if self.s.len() == self.cfg.memory {
                        self.s.pop_front();
                        self.y.pop_front();
                    }
                    self.s.push_back(s.clone());
                    self.y.push_back(y);
                }
                theta.iter_mut().zip(&s).for_each(|(t, s)| *t += s);
                let info = StepInfo { alpha: t.alpha, f0: *f, f1: t.f, slope0, slope1: t.slope, evals, restarted };
                *f = t.f;
                *g = t.g;
                return Ok(info);
            }
        }
        self.reset();
        Err(OptimError::LineSearchFailed)
    }
}
