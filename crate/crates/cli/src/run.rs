//! The four commands and their artifacts.

use crate::config::{Resolved, TrainConfig};
use crate::output::{float, write_cells, write_csv, write_json};
use crate::CliError;
use polybc::autodiff::Jet2;
use polybc::barycentric::coordinates_jet;
use polybc::expr::Bindings;
use polybc::geometry::{random_interior, sample_points, Point, PointLocation, Polygon, BOUNDARY_TOL};
use polybc::loss::{cubature_nodes, mapped_point, Objective, ObjectiveKind, SOURCE_TERMS};
use polybc::network::{Architecture, Mlp};
use polybc::optim::{run_schedule, RunRecord};
use polybc::transfinite::lift_g;
use polybc::trial::{TrialContext, TrialPoint};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Coords,
    Lift,
    Solve,
    Inverse,
}

/// What a run produced, also written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: Command,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub rows: usize,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub max_abs_err: Option<f64>,
    pub median_abs_err: Option<f64>,
    pub max_grad_err: Option<f64>,
    pub coefficients: Option<[f64; SOURCE_TERMS]>,
    pub early_stops: Vec<(usize, String)>,
    pub wall_seconds: f64,
    /// Set when training failed; the other outputs are still written.
    pub error: Option<String>,
}

impl Summary {
    fn new(command: Command, out_dir: &Path) -> Self {
        Summary {
            command,
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
            rows: 0,
            epochs: 0,
            final_loss: None,
            max_abs_err: None,
            median_abs_err: None,
            max_grad_err: None,
            coefficients: None,
            early_stops: Vec::new(),
            wall_seconds: 0.0,
            error: None,
        }
    }
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn train_err(e: impl std::fmt::Display) -> CliError {
    CliError::Training(e.to_string())
}

/// Run `command`; outputs go to `out` (or the configured directory).
pub fn run(command: Command, cfg: &TrainConfig, out: Option<&Path>, seed: Option<u64>) -> Result<Summary, CliError> {
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let training = matches!(command, Command::Solve | Command::Inverse);
    match (command, cfg.problem.kind) {
        (Command::Inverse, k) if k != ObjectiveKind::InversePoisson => {
            return Err(cfg_err("the inverse command needs kind = \"inverse_poisson\""))
        }
        (Command::Solve, ObjectiveKind::InversePoisson) => return Err(cfg_err("use the inverse command for kind = \"inverse_poisson\"")),
        _ => {}
    }
    let res = cfg.resolve(training)?;
    if !training && cfg.sampling.is_none() {
        return Err(cfg_err("missing [sampling] section"));
    }
    if let Some(inv) = &cfg.inverse {
        if !inv.data_file.exists() {
            return Err(CliError::Io(format!("data file {} not found", inv.data_file.display())));
        }
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let start = Instant::now();
    let mut summary = Summary::new(command, &dir);
    match command {
        Command::Coords => coords(&cfg, &res, &dir, &mut summary)?,
        Command::Lift => lift(&cfg, &res, &dir, &mut summary)?,
        Command::Solve | Command::Inverse => solve(&cfg, &res, &dir, &mut summary)?,
    }
    let manifest = serde_json::json!({
        "command": command,
        "seed": cfg.seed,
        "config": cfg,
        "versions": { "polybc": env!("CARGO_PKG_VERSION") },
        "outputs": summary.files,
    });
    write_json(&dir.join("manifest.json"), &manifest)?;
    summary.files.push("manifest.json".into());
    summary.wall_seconds = start.elapsed().as_secs_f64();
    summary.files.push("summary.json".into());
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn points(cfg: &TrainConfig, poly: &Polygon) -> Result<Vec<Point>, CliError> {
    sample_points(poly, cfg.sampling.as_ref().expect("checked"), cfg.seed).map_err(cfg_err)
}

/// Collocation points strictly inside the polygon. On the boundary the trial function is fixed by
/// the data, so a residual there cannot be trained away (and is incompatible at corners).
fn collocation(cfg: &TrainConfig, poly: &Polygon) -> Result<Vec<Point>, CliError> {
    let pts: Vec<Point> = points(cfg, poly)?.into_iter().filter(|p| poly.locate(*p, BOUNDARY_TOL) == PointLocation::Interior).collect();
    if pts.is_empty() {
        return Err(cfg_err("sampling: no collocation points inside the domain"));
    }
    Ok(pts)
}

fn coords(cfg: &TrainConfig, res: &Resolved, dir: &Path, summary: &mut Summary) -> Result<(), CliError> {
    let n = res.polygon.n();
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend((1..=n).map(|i| format!("lambda_{i}")));
    let rows = points(cfg, &res.polygon)?
        .into_iter()
        .map(|p| {
            let l = coordinates_jet(cfg.boundary.coordinates, &res.polygon, p).map_err(cfg_err)?;
            Ok([p[0], p[1]].into_iter().chain(l.iter().map(|j| j.v)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>, CliError>>()?;
    summary.rows = rows.len();
    write_csv(&dir.join("coords.csv"), &header, &rows)?;
    summary.files.push("coords.csv".into());
    Ok(())
}

fn lift(cfg: &TrainConfig, res: &Resolved, dir: &Path, summary: &mut Summary) -> Result<(), CliError> {
    let rows = points(cfg, &res.polygon)?
        .into_iter()
        .map(|p| {
            let l = coordinates_jet(cfg.boundary.coordinates, &res.polygon, p).map_err(cfg_err)?;
            let g = lift_g(&res.spec, &l).map_err(cfg_err)?;
            Ok(vec![p[0], p[1], g.v, g.laplacian()])
        })
        .collect::<Result<Vec<Vec<f64>>, CliError>>()?;
    summary.rows = rows.len();
    write_csv(&dir.join("lift.csv"), &["x", "y", "g", "lap_g"], &rows)?;
    summary.files.push("lift.csv".into());
    Ok(())
}

/// Inverse-problem data: rows of `x,y,u`.
pub fn read_data(path: &Path) -> Result<(Vec<Point>, Vec<f64>), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(io)?;
    let headers = rdr.headers().map_err(io)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| cfg_err(format!("{}: missing column `{name}`", path.display())));
    let (cx, cy, cu) = (col("x")?, col("y")?, col("u")?);
    let (mut pts, mut vals) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(io)?;
        let row = pts.len() + 1;
        let num = |c: usize| rec.get(c).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| cfg_err(format!("{}: bad number in row {row}", path.display())));
        pts.push([num(cx)?, num(cy)?]);
        vals.push(num(cu)?);
    }
    Ok((pts, vals))
}

/// Trial context at Cartesian points with the configured trial and coordinates.
fn cartesian(cfg: &TrainConfig, res: &Resolved, arch: &Architecture, pts: &[Point]) -> Result<TrialContext, CliError> {
    TrialContext::cartesian(cfg.problem.trial, cfg.boundary.coordinates, &res.spec, arch.clone(), pts).map_err(cfg_err)
}

fn parametric_points(pts: &[Point], ps: &[f64]) -> Vec<[f64; 3]> {
    ps.iter().flat_map(|&p| pts.iter().map(move |q| [q[0], q[1], p])).collect()
}

fn build_objective(cfg: &TrainConfig, res: &Resolved, arch: &Architecture) -> Result<Objective, CliError> {
    let kind = cfg.problem.kind;
    if kind == ObjectiveKind::Ritz {
        let (pts, w) = cubature_nodes(&res.polygon, cfg.problem.refine_level, cfg.problem.quadrature_order).map_err(cfg_err)?;
        return Objective::ritz(cartesian(cfg, res, arch, &pts)?, &pts, w, &res.source).map_err(cfg_err);
    }
    let pts = collocation(cfg, &res.polygon)?;
    match kind {
        ObjectiveKind::Poisson => Objective::poisson(cartesian(cfg, res, arch, &pts)?, &pts, &res.source),
        ObjectiveKind::NonlinearPoisson => Objective::nonlinear_poisson(cartesian(cfg, res, arch, &pts)?, &pts, &res.source),
        ObjectiveKind::Eikonal => Objective::eikonal(cartesian(cfg, res, arch, &pts)?),
        ObjectiveKind::ParametricPoisson => {
            let par = cfg.parametric.as_ref().expect("checked");
            Objective::parametric(arch.clone(), cfg.boundary.coordinates, &parametric_points(&pts, &par.train_p), &res.source)
        }
        ObjectiveKind::InversePoisson => {
            let inv = cfg.inverse.as_ref().expect("checked");
            let (dpts, vals) = read_data(&inv.data_file)?;
            let data = cartesian(cfg, res, arch, &dpts)?;
            Objective::inverse(cartesian(cfg, res, arch, &pts)?, &pts, data, vals, inv.data_weight)
                .and_then(|o| o.with_source_scale(inv.coefficient_scale))
        }
        ObjectiveKind::Ritz => unreachable!("handled above"),
    }
    .map_err(cfg_err)
}

/// Value and gradient of the exact solution at a physical point.
fn exact_at(res: &Resolved, exact_distance: bool, p: Point, shape: Option<f64>) -> Result<Option<Jet2>, CliError> {
    if exact_distance {
        let (x, y) = Jet2::seed(p[0], p[1]);
        let d = res.polygon.distances(x, y);
        let near = d.iter().copied().min_by(|a, b| a.v.total_cmp(&b.v)).expect("polygon has edges");
        return Ok(Some(Jet2 { hxx: 0.0, hxy: 0.0, hyy: 0.0, ..near }));
    }
    let Some(e) = &res.exact else { return Ok(None) };
    let (x, y) = Jet2::seed(p[0], p[1]);
    let mut b = Bindings::xy(x, y);
    if let Some(v) = shape {
        b = b.with_p(Jet2::cst(v));
    }
    e.eval(&b).map(Some).map_err(|err| CliError::Config(format!("problem.exact: {err}")))
}

struct Prediction {
    point: Point,
    shape: Option<f64>,
    /// Value and physical gradient.
    u: [f64; 3],
}

fn predict(cfg: &TrainConfig, res: &Resolved, arch: &Architecture, params: &[f64]) -> Result<Vec<Prediction>, CliError> {
    let test = match &cfg.test {
        Some(t) => sample_points(&res.polygon, t, cfg.seed.wrapping_add(1)).map_err(cfg_err)?,
        None if cfg.problem.kind == ObjectiveKind::Ritz => {
            cubature_nodes(&res.polygon, cfg.problem.refine_level, cfg.problem.quadrature_order).map_err(cfg_err)?.0
        }
        None => points(cfg, &res.polygon)?,
    };
    if let Some(par) = &cfg.parametric {
        let mut out = Vec::new();
        for &p in &par.test_p {
            let tps = test
                .iter()
                .map(|q| {
                    let lambda = coordinates_jet(cfg.boundary.coordinates, &res.polygon, *q).map_err(cfg_err)?;
                    Ok(TrialPoint { lambda, g: Jet2::ZERO, extra: Some(p), phi: None })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let ctx = TrialContext::from_points(cfg.problem.trial, 4, arch.clone(), tps).map_err(cfg_err)?;
            for (q, u) in test.iter().zip(ctx.evaluate(params).map_err(train_err)?) {
                let (xi, eta) = (q[0], q[1]);
                let a = 2.0 - (1.0 - p) * xi;
                let ux = u.gx + u.gy * eta * (1.0 - p) / a;
                let uy = u.gy * 2.0 / a;
                out.push(Prediction { point: mapped_point(xi, eta, p), shape: Some(p), u: [u.v, ux, uy] });
            }
        }
        return Ok(out);
    }
    let ctx = cartesian(cfg, res, arch, &test)?;
    let us = ctx.evaluate(params).map_err(train_err)?;
    Ok(test.iter().zip(us).map(|(q, u)| Prediction { point: *q, shape: None, u: [u.v, u.gx, u.gy] }).collect())
}

fn write_predictions(cfg: &TrainConfig, res: &Resolved, preds: &[Prediction], dir: &Path, summary: &mut Summary) -> Result<(), CliError> {
    let has_exact = res.exact.is_some() || cfg.problem.exact_distance;
    let param = cfg.parametric.is_some();
    let mut header: Vec<&str> = vec!["x", "y"];
    if param {
        header.push("p");
    }
    header.push("u_pred");
    if has_exact {
        header.extend(["u_exact", "abs_err", "grad_err"]);
    }
    let mut errs = Vec::new();
    let mut gmax: f64 = 0.0;
    let mut rows = Vec::with_capacity(preds.len());
    for pr in preds {
        let mut row = vec![pr.point[0], pr.point[1]];
        row.extend(pr.shape);
        row.push(pr.u[0]);
        if let Some(e) = exact_at(res, cfg.problem.exact_distance, pr.point, pr.shape)? {
            let err = (pr.u[0] - e.v).abs();
            let gerr = ((pr.u[1] - e.gx).powi(2) + (pr.u[2] - e.gy).powi(2)).sqrt();
            errs.push(err);
            gmax = gmax.max(gerr);
            row.extend([e.v, err, gerr]);
        }
        rows.push(row);
    }
    if !errs.is_empty() {
        errs.sort_by(f64::total_cmp);
        summary.max_abs_err = errs.last().copied();
        summary.median_abs_err = Some(errs[errs.len() / 2]);
        summary.max_grad_err = Some(gmax);
    }
    summary.rows = rows.len();
    write_csv(&dir.join("predictions.csv"), &header, &rows)?;
    summary.files.push("predictions.csv".into());
    Ok(())
}

fn write_history(record: &RunRecord, dir: &Path, summary: &mut Summary) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> =
        record.epochs.iter().map(|e| vec![e.epoch.to_string(), float(e.loss), float(e.lr), e.phase.to_string()]).collect();
    write_cells(&dir.join("loss_history.csv"), &["epoch", "loss", "lr", "phase"], &rows)?;
    summary.files.push("loss_history.csv".into());
    Ok(())
}

fn solve(cfg: &TrainConfig, res: &Resolved, dir: &Path, summary: &mut Summary) -> Result<(), CliError> {
    let arch = res.arch.as_ref().expect("checked");
    let obj = build_objective(cfg, res, arch)?;
    let mut theta0 = arch.init(res.init_seed);
    if let Some(inv) = &cfg.inverse {
        theta0.extend(inv.initial.map(|a| a / inv.coefficient_scale));
    }
    let record = match run_schedule(&cfg.phases, &obj, theta0, cfg.seed) {
        Ok(r) => r,
        Err(f) => {
            summary.error = Some(f.error.to_string());
            f.record
        }
    };
    summary.epochs = record.epochs.len();
    summary.final_loss = record.final_loss;
    summary.early_stops = record.early_stops.clone();
    write_history(&record, dir, summary)?;
    let n_net = arch.n_params();
    let net = Mlp::from_params(arch.clone(), record.params[..n_net].to_vec()).map_err(train_err)?;
    std::fs::write(dir.join("checkpoint.json"), net.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
    summary.files.push("checkpoint.json".into());
    if let Some(a) = obj.source_coefficients(&record.params) {
        summary.coefficients = Some(a);
        let names = ["1", "x", "y", "x^2", "y^2", "xy"];
        write_json(&dir.join("coefficients.json"), &serde_json::json!({ "coefficients": a, "monomials": names }))?;
        summary.files.push("coefficients.json".into());
    }
    let preds = predict(cfg, res, arch, &record.params)?;
    write_predictions(cfg, res, &preds, dir, summary)?;
    if let Some(ex) = &cfg.export {
        let pts = random_interior(&res.polygon, ex.points, ex.seed);
        let us = cartesian(cfg, res, arch, &pts)?.evaluate(&record.params).map_err(train_err)?;
        let rows: Vec<Vec<f64>> = pts.iter().zip(us).map(|(p, u)| vec![p[0], p[1], u.v]).collect();
        write_csv(&dir.join(&ex.file), &["x", "y", "u"], &rows)?;
        summary.files.push(ex.file.clone());
    }
    Ok(())
}
