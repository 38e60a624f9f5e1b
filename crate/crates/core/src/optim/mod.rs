//! Adam and L-BFGS, log-loss wrapping, mini-batching and the phase runner.

mod adam;
mod lbfgs;

pub use adam::{Adam, AdamConfig};
pub use lbfgs::{Eval, Lbfgs, LbfgsConfig, StepInfo};

use crate::loss::{LossError, Objective};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid phase: {0}")]
    InvalidPhase(String),
    #[error("schedule has no phases")]
    EmptySchedule,
    #[error("expected {expected} parameters, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("gradient entry {index} is not finite")]
    NonFiniteGradient { index: usize },
    #[error("line search failed after a steepest-descent restart")]
    LineSearchFailed,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("epoch {epoch}: {source}")]
    AtEpoch { epoch: usize, source: Box<OptimError> },
}

/// Offset inside the logarithm of the log-loss.
pub const LOG_FLOOR: f64 = 1e-30;

/// `ln(L + floor)` and its gradient `g / (L + floor)`.
pub fn log_loss(value: f64, grad: &[f64]) -> (f64, Vec<f64>) {
    let d = value + LOG_FLOOR;
    (d.ln(), grad.iter().map(|g| g / d).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Lbfgs,
}

fn default_lr() -> f64 {
    1e-3
}

fn default_decay() -> f64 {
    1.0
}

fn default_iters() -> usize {
    1
}

fn default_memory() -> usize {
    LbfgsConfig::default().memory
}

/// One stage of training.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    /// Adam step size; the learning rate is multiplied by `decay` after every step.
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub log_loss: bool,
    /// Points per mini-batch, 0 for full batch. Adam only.
    #[serde(default)]
    pub minibatch: usize,
    /// L-BFGS history length.
    #[serde(default = "default_memory")]
    pub memory: usize,
    /// L-BFGS iterations per recorded epoch.
    #[serde(default = "default_iters")]
    pub iters_per_epoch: usize,
    /// End the phase once the recorded loss drops to this value.
    #[serde(default)]
    pub stop_below: Option<f64>,
}

impl Phase {
    pub fn adam(epochs: usize, lr: f64) -> Self {
        Phase { optimizer: OptimizerKind::Adam, epochs, lr, decay: 1.0, log_loss: false, minibatch: 0, memory: default_memory(), iters_per_epoch: 1, stop_below: None }
    }

    pub fn lbfgs(epochs: usize, log_loss: bool) -> Self {
        Phase { optimizer: OptimizerKind::Lbfgs, epochs, lr: 1.0, decay: 1.0, log_loss, minibatch: 0, memory: default_memory(), iters_per_epoch: 1, stop_below: None }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::InvalidPhase(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay {} outside (0, 1]", self.decay));
        }
        if self.optimizer == OptimizerKind::Adam && !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.memory == 0 || self.iters_per_epoch == 0 {
            return bad("L-BFGS memory and iterations per epoch must be at least 1".into());
        }
        if self.optimizer == OptimizerKind::Lbfgs && self.minibatch > 0 {
            return bad("L-BFGS needs the full batch".into());
        }
        Ok(())
    }
}

/// Something the runner can minimize.
pub trait Problem {
    fn dim(&self) -> usize;
    /// Size of the point set that mini-batches partition.
    fn n_points(&self) -> usize;
    fn value_and_grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<(f64, Vec<f64>), LossError>;
    fn value(&self, theta: &[f64]) -> Result<f64, LossError> {
        Ok(self.value_and_grad(theta, None)?.0)
    }
}

impl Problem for Objective {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn n_points(&self) -> usize {
        Objective::n_points(self)
    }

    fn value_and_grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<(f64, Vec<f64>), LossError> {
        Objective::value_and_grad(self, theta, batch)
    }

    fn value(&self, theta: &[f64]) -> Result<f64, LossError> {
        Objective::value(self, theta)
    }
}

/// A closure objective without points, for tests and small problems.
pub struct FnProblem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>)> Problem for FnProblem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_points(&self) -> usize {
        1
    }

    fn value_and_grad(&self, theta: &[f64], _: Option<&[usize]>) -> Result<(f64, Vec<f64>), LossError> {
        let (v, g) = (self.f)(theta);
        if !v.is_finite() {
            return Err(LossError::NonFiniteLoss(v));
        }
        Ok((v, g))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochRecord {
    /// 1-based, counted across phases.
    pub epoch: usize,
    /// Raw loss (never the logarithm).
    pub loss: f64,
    /// Adam learning rate, or the accepted L-BFGS step length.
    pub lr: f64,
    /// 0-based phase index.
    pub phase: usize,
    pub wall: f64,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
    pub params: Vec<f64>,
    /// Full-batch loss at `params`, when it could be evaluated.
    pub final_loss: Option<f64>,
    /// Phases that stopped before their epoch budget, with the reason.
    pub early_stops: Vec<(usize, String)>,
}

impl RunRecord {
    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.epochs.iter().map(|e| e.loss)
    }
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub record: RunRecord,
    pub error: OptimError,
}

/// Hook called after every epoch with the record entry and current parameters.
pub type Observer<'o> = dyn FnMut(&EpochRecord, &[f64]) + 'o;

/// Run `phases` in order from `theta0`.
pub fn run_schedule(phases: &[Phase], problem: &dyn Problem, theta0: Vec<f64>, seed: u64) -> Result<RunRecord, RunFailure> {
    run_schedule_with(phases, problem, theta0, seed, &mut |_, _| {})
}

pub fn run_schedule_with(
    phases: &[Phase],
    problem: &dyn Problem,
    theta0: Vec<f64>,
    seed: u64,
    observer: &mut Observer<'_>,
) -> Result<RunRecord, RunFailure> {
    let mut record = RunRecord { params: theta0, ..RunRecord::default() };
    let check = || -> Result<(), OptimError> {
        if phases.is_empty() {
            return Err(OptimError::EmptySchedule);
        }
        if record.params.len() != problem.dim() {
            return Err(OptimError::Dimension { expected: problem.dim(), got: record.params.len() });
        }
        phases.iter().try_for_each(Phase::validate)
    };
    if let Err(error) = check() {
        return Err(RunFailure { record, error });
    }
    let start = Instant::now();
    let mut epoch = 0;
    for (k, phase) in phases.iter().enumerate() {
        let result = match phase.optimizer {
            OptimizerKind::Adam => run_adam(phase, k, problem, &mut record, &mut epoch, seed, start, observer),
            OptimizerKind::Lbfgs => run_lbfgs(phase, k, problem, &mut record, &mut epoch, start, observer),
        };
        if let Err(error) = result {
            record.final_loss = problem.value(&record.params).ok();
            return Err(RunFailure { record, error: OptimError::AtEpoch { epoch: epoch + 1, source: Box::new(error) } });
        }
    }
    record.final_loss = problem.value(&record.params).ok();
    Ok(record)
}

#[allow(clippy::too_many_arguments)]
fn run_adam(
    phase: &Phase,
    k: usize,
    problem: &dyn Problem,
    record: &mut RunRecord,
    epoch: &mut usize,
    seed: u64,
    start: Instant,
    observer: &mut Observer<'_>,
) -> Result<(), OptimError> {
    let mut adam = Adam::new(problem.dim(), AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    let mut order: Vec<usize> = (0..problem.n_points()).collect();
    let mut lr = phase.lr;
    for done in 0..phase.epochs {
        let batches: Vec<&[usize]> = if phase.minibatch == 0 || phase.minibatch >= order.len() {
            vec![]
        } else {
            order.shuffle(&mut rng);
            order.chunks(phase.minibatch).collect()
        };
        let mut total = 0.0;
        let steps = batches.len().max(1);
        for s in 0..steps {
            let batch = batches.get(s).map(|b| {
                let mut b = b.to_vec();
                b.sort_unstable();
                b
            });
            let (value, grad) = problem.value_and_grad(&record.params, batch.as_deref())?;
            total += value;
            let grad = if phase.log_loss { log_loss(value, &grad).1 } else { grad };
            adam.step(&mut record.params, &grad, lr)?;
            lr *= phase.decay;
        }
        *epoch += 1;
        let entry = EpochRecord { epoch: *epoch, loss: total / steps as f64, lr, phase: k, wall: start.elapsed().as_secs_f64() };
        observer(&entry, &record.params);
        let reached = phase.stop_below.is_some_and(|t| entry.loss <= t);
        record.epochs.push(entry);
        if reached {
            record.early_stops.push((k, format!("loss target reached after {} epochs", done + 1)));
            break;
        }
    }
    Ok(())
}

fn run_lbfgs(
    phase: &Phase,
    k: usize,
    problem: &dyn Problem,
    record: &mut RunRecord,
    epoch: &mut usize,
    start: Instant,
    observer: &mut Observer<'_>,
) -> Result<(), OptimError> {
    let transform = |v: f64, g: Vec<f64>| if phase.log_loss { log_loss(v, &g) } else { (v, g) };
    let mut eval = |x: &[f64]| problem.value_and_grad(x, None).map(|(v, g)| transform(v, g));
    let mut opt = Lbfgs::new(LbfgsConfig { memory: phase.memory, ..LbfgsConfig::default() });
    let (raw, g0) = problem.value_and_grad(&record.params, None)?;
    let (mut f, mut g) = transform(raw, g0);
    for done in 0..phase.epochs {
        let mut alpha = 0.0;
        let mut failed = false;
        for _ in 0..phase.iters_per_epoch {
            match opt.step(&mut record.params, &mut f, &mut g, &mut eval) {
                Ok(info) => alpha = info.alpha,
                Err(OptimError::LineSearchFailed) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if alpha > 0.0 {
            *epoch += 1;
            let loss = if phase.log_loss { f.exp() - LOG_FLOOR } else { f };
            let entry = EpochRecord { epoch: *epoch, loss: loss.max(0.0), lr: alpha, phase: k, wall: start.elapsed().as_secs_f64() };
            observer(&entry, &record.params);
            record.epochs.push(entry);
        }
        if failed {
            record.early_stops.push((k, format!("line search failed after {done} of {} epochs", phase.epochs)));
            return Ok(());
        }
        if phase.stop_below.is_some_and(|t| record.epochs.last().is_some_and(|e| e.phase == k && e.loss <= t)) {
            record.early_stops.push((k, format!("loss target reached after {} epochs", done + 1)));
            return Ok(());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bowl() -> FnProblem<impl Fn(&[f64]) -> (f64, Vec<f64>)> {
        FnProblem { dim: 3, f: |x: &[f64]| (x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect()) }
    }

    #[test]
    fn phases_validate() {
        let mut p = Phase::adam(0, 1e-3);
        assert!(matches!(p.validate(), Err(OptimError::InvalidPhase(_))));
        p.epochs = 5;
        p.decay = 1.5;
        assert!(p.validate().is_err());
        let mut l = Phase::lbfgs(5, true);
        l.minibatch = 10;
        assert!(l.validate().is_err());
        let fail = run_schedule(&[Phase::adam(0, 1e-3)], &bowl(), vec![1.0; 3], 0).unwrap_err();
        assert!(matches!(fail.error, OptimError::InvalidPhase(_)));
        assert!(fail.record.epochs.is_empty());
        assert_eq!(run_schedule(&[], &bowl(), vec![1.0; 3], 0).unwrap_err().error, OptimError::EmptySchedule);
        let parsed: Phase = serde_json::from_str(r#"{"optimizer":"adam","epochs":3}"#).unwrap();
        assert_eq!(parsed, Phase::adam(3, 1e-3));
    }

    #[test]
    fn adam_then_lbfgs() {
        let rec = run_schedule(&[Phase::adam(50, 1e-2), Phase::lbfgs(20, false)], &bowl(), vec![1.0, -2.0, 0.5], 1).unwrap();
        assert_eq!(rec.epochs.iter().filter(|e| e.phase == 0).count(), 50);
        assert!(rec.final_loss.unwrap() <= 1e-20, "{:?}", rec.final_loss);
        assert!(rec.epochs.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
        // L-BFGS ran out of descent once the bowl was solved, and said so.
        assert!(rec.epochs.len() == 70 || rec.early_stops.len() == 1);
        // With log-loss the recorded losses stay raw.
        let lifted = FnProblem { dim: 2, f: |x: &[f64]| (0.5 + (x[0] - 1.0).powi(2) + 4.0 * x[1] * x[1], vec![2.0 * (x[0] - 1.0), 8.0 * x[1]]) };
        let rec = run_schedule(&[Phase::lbfgs(30, true)], &lifted, vec![3.0, 1.0], 0).unwrap();
        assert!((rec.final_loss.unwrap() - 0.5).abs() < 1e-14);
        assert!((rec.epochs.last().unwrap().loss - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inner_iterations_and_targets() {
        let rosen = FnProblem {
            dim: 2,
            f: |x: &[f64]| {
                let (a, b) = (x[0], x[1]);
                ((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2), vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
            },
        };
        let mut p = Phase::lbfgs(4, false);
        p.iters_per_epoch = 5;
        let rec = run_schedule(&[p.clone()], &rosen, vec![-1.2, 1.0], 0).unwrap();
        assert_eq!(rec.epochs.len(), 4);
        p.epochs = 20;
        p.stop_below = Some(1e-3);
        let rec = run_schedule(&[p, Phase::adam(3, 1e-3)], &rosen, vec![-1.2, 1.0], 0).unwrap();
        let first: Vec<_> = rec.epochs.iter().filter(|e| e.phase == 0).collect();
        assert!(first.last().unwrap().loss <= 1e-3 && first.iter().rev().skip(1).all(|e| e.loss > 1e-3));
        assert_eq!(rec.epochs.iter().filter(|e| e.phase == 1).count(), 3);
        assert_eq!(rec.early_stops.len(), 1);
    }

    #[test]
    fn learning_rate_decays_per_step() {
        let mut p = Phase::adam(1000, 1e-3);
        p.decay = 0.999;
        let rec = run_schedule(&[p], &bowl(), vec![1.0; 3], 0).unwrap();
        let want = 1e-3 * 0.999f64.powi(1000);
        assert!((rec.epochs.last().unwrap().lr - want).abs() < 1e-15);
        assert!((0.99999f64.powi(75_000) * 1e-3 - 1e-3 * (-0.75f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn divergence_reports_epoch_and_keeps_record() {
        let blow = FnProblem { dim: 1, f: |x: &[f64]| ((-x[0]).exp().exp(), vec![-(-x[0]).exp() * (-x[0]).exp().exp()]) };
        let fail = run_schedule(&[Phase::adam(100, 5.0)], &blow, vec![0.0], 0);
        // exp(exp(-x)) decreases in x, so Adam moves right and stays finite.
        assert!(fail.is_ok());
        let nan_at_3 = FnProblem { dim: 1, f: |x: &[f64]| if x[0] > 0.025 { (f64::NAN, vec![0.0]) } else { (1.0 - x[0], vec![-1.0]) } };
        let fail = run_schedule(&[Phase::adam(10, 0.01)], &nan_at_3, vec![0.0], 0).unwrap_err();
        assert_eq!(fail.record.epochs.len(), 3);
        assert!(matches!(fail.error, OptimError::AtEpoch { epoch: 4, .. }), "{:?}", fail.error);
    }

    #[test]
    fn lbfgs_schedule_on_rosenbrock() {
        let rosen = FnProblem {
            dim: 2,
            f: |x: &[f64]| {
                let (a, b) = (x[0], x[1]);
                ((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2), vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
            },
        };
        let rec = run_schedule(&[Phase::lbfgs(200, false)], &rosen, vec![-1.2, 1.0], 0).unwrap();
        assert!((rec.params[0] - 1.0).abs() <= 1e-8 && (rec.params[1] - 1.0).abs() <= 1e-8);
        let again = run_schedule(&[Phase::lbfgs(200, false)], &rosen, vec![-1.2, 1.0], 0).unwrap();
        assert_eq!(rec.params, again.params);
    }

    struct Counting {
        n: usize,
        seen: std::cell::RefCell<Vec<usize>>,
    }

    impl Problem for Counting {
        fn dim(&self) -> usize {
            1
        }
        fn n_points(&self) -> usize {
            self.n
        }
        fn value_and_grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<(f64, Vec<f64>), LossError> {
            if let Some(b) = batch {
                self.seen.borrow_mut().extend(b);
            }
            Ok((theta[0] * theta[0], vec![2.0 * theta[0]]))
        }
    }

    #[test]
    fn minibatches_cover_every_point_each_epoch() {
        let p = Counting { n: 18_000, seen: Default::default() };
        let mut phase = Phase::adam(2, 1e-3);
        phase.minibatch = 3000;
        run_schedule_with(&[phase], &p, vec![1.0], 4, &mut |_, _| {
            let mut seen = p.seen.borrow_mut();
            let mut s = seen.clone();
            s.sort_unstable();
            assert_eq!(s, (0..18_000).collect::<Vec<_>>());
            seen.clear();
        })
        .ok();
    }

    proptest! {
        #[test]
        fn log_loss_keeps_direction(g in prop::collection::vec(-1e3f64..1e3, 1..20), l in 1e-20f64..1e6) {
            prop_assume!(g.iter().any(|v| v.abs() > 1e-12));
            let (_, lg) = log_loss(l, &g);
            let dot: f64 = g.iter().zip(&lg).map(|(a, b)| a * b).sum();
            let na = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = lg.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(dot / (na * nb) >= 1.0 - 1e-12);
        }
    }
}
