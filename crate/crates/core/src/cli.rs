//! Command-line surface. Each `cmd_*` function is usable directly from
//! Rust; [`run`] parses arguments and dispatches to them.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::fedmap::train;
use crate::neuralnet::RadioModel;
use crate::planner::{plan, validate_path, Infeasible, Path};
use crate::scenario::{
    create_file, derive_stream, evaluate_model_map, evaluate_truth_map, load_config, load_model, open_file,
    path_from_rows, path_rows, read_path_csv, save_model, stream, write_metrics_csv, write_path_csv, write_text,
    ScenarioConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Failure,
    ConfigError,
    Infeasible,
    ValidationFailed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Failure => 1,
            Status::ConfigError => 2,
            Status::Infeasible => 3,
            Status::ValidationFailed => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub status: Status,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl CommandOutcome {
    fn ok(artifacts: Vec<PathBuf>, summary: String) -> Self {
        CommandOutcome {
            status: Status::Success,
            artifacts,
            summary,
        }
    }

    fn from_error(e: Error, artifacts: Vec<PathBuf>) -> Self {
        let status = match e {
            Error::Config(_) => Status::ConfigError,
            _ => Status::Failure,
        };
        CommandOutcome {
            status,
            artifacts,
            summary: format!("error: {e}"),
        }
    }
}

/// Config file (or defaults) with the seed override applied.
pub fn resolve_config(path: Option<&FsPath>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn check_config(cfg: &ScenarioConfig) -> Result<()> {
    cfg.validate().map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })
}

/// Monte-Carlo outage map of the configured scene.
pub fn cmd_truth(cfg: &ScenarioConfig, resolution: usize, n_mc: usize, out: &FsPath) -> CommandOutcome {
    let result = (|| {
        check_config(cfg)?;
        if resolution < 2 || n_mc == 0 {
            return Err(Error::Config("resolution must be >= 2 and n_mc >= 1".into()));
        }
        let airspace = cfg.airspace()?;
        let grid = evaluate_truth_map(&airspace, resolution, n_mc, derive_stream(cfg.master_seed, "truth", 0))?;
        grid.write_csv(create_file(out)?)?;
        let mean = grid.values.iter().sum::<f64>() / grid.values.len() as f64;
        Ok(format!(
            "truth map {resolution}x{resolution}, n_mc {n_mc}, mean outage {mean:.4} -> {}",
            out.display()
        ))
    })();
    match result {
        Ok(s) => CommandOutcome::ok(vec![out.to_path_buf()], s),
        Err(e) => CommandOutcome::from_error(e, vec![]),
    }
}

/// Federated training; writes the model and per-round metrics.
pub fn cmd_map(cfg: &ScenarioConfig, out_model: &FsPath, out_metrics: &FsPath) -> CommandOutcome {
    let result = (|| {
        check_config(cfg)?;
        let airspace = cfg.airspace()?;
        let outcome = train(&cfg.training, &airspace, &[cfg.flight], cfg.master_seed)?;
        save_model(&RadioModel::new(outcome.params, cfg.area), out_model)?;
        write_metrics_csv(&outcome.history, create_file(out_metrics)?)?;
        let last = outcome
            .history
            .last()
            .map(|m| format!("final loss {:.4} on {} samples", m.global_loss, m.total_samples))
            .unwrap_or_else(|| "no rounds run".into());
        Ok(format!(
            "trained {} rounds, {last} -> {}",
            outcome.history.len(),
            out_model.display()
        ))
    })();
    match result {
        Ok(s) => CommandOutcome::ok(vec![out_model.to_path_buf(), out_metrics.to_path_buf()], s),
        Err(e) => CommandOutcome::from_error(e, vec![]),
    }
}

fn check_endpoint(cfg: &ScenarioConfig, name: &str, q: [f64; 2]) -> Result<()> {
    if cfg.area.contains(q) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} {q:?} is outside the area")))
    }
}

/// Plan a path on a saved model. `p0` overrides the configured threshold.
pub fn cmd_plan(
    cfg: &ScenarioConfig,
    model_file: &FsPath,
    start: [f64; 2],
    goal: [f64; 2],
    p0: Option<f64>,
    out_path: &FsPath,
) -> CommandOutcome {
    let result = (|| {
        check_config(cfg)?;
        check_endpoint(cfg, "start", start)?;
        check_endpoint(cfg, "goal", goal)?;
        let model = load_model(model_file)?;
        let pcfg = cfg.planner_config(p0.unwrap_or(cfg.connectivity.outage_threshold));
        pcfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = stream(cfg.master_seed, "plan", 0);
        match plan(&pcfg, &model, start, goal, &mut rng)? {
            Ok(path) => {
                write_path_csv(&path_rows(&path, &model), create_file(out_path)?)?;
                Ok(Ok(format!(
                    "path with {} waypoints, length {:.2} m, flight time {:.1} s -> {}",
                    path.waypoints.len(),
                    path.length,
                    path.flight_time,
                    out_path.display()
                )))
            }
            Err(why) => Ok(Err(why)),
        }
    })();
    match result {
        Ok(Ok(s)) => CommandOutcome::ok(vec![out_path.to_path_buf()], s),
        Ok(Err(why)) => CommandOutcome {
            status: Status::Infeasible,
            artifacts: vec![],
            summary: format!("infeasible: {why}"),
        },
        Err(e) => CommandOutcome::from_error(e, vec![]),
    }
}

/// Check a saved path against the model constraints and Monte-Carlo truth.
/// Endpoints are compared only when given. The report is written as JSON
/// when `out` is set.
pub fn cmd_validate(
    cfg: &ScenarioConfig,
    path_file: &FsPath,
    model_file: &FsPath,
    n_mc: usize,
    p0: Option<f64>,
    endpoints: Option<([f64; 2], [f64; 2])>,
    out: Option<&FsPath>,
) -> CommandOutcome {
    let result = (|| {
        check_config(cfg)?;
        let model = load_model(model_file)?;
        let rows = read_path_csv(open_file(path_file)?)?;
        let path = path_from_rows(&rows, cfg.connectivity.v_max);
        let pcfg = cfg.planner_config(p0.unwrap_or(cfg.connectivity.outage_threshold));
        let airspace = cfg.airspace()?;
        let mut rng = stream(cfg.master_seed, "validate", 0);
        let report = validate_path(&path, endpoints, &model, &pcfg, &airspace, n_mc, &mut rng)?;
        if let Some(out) = out {
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_text(out, &json)?;
        }
        let mut s = String::new();
        let flag = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        let _ = writeln!(s, "waypoints: {}", path.waypoints.len());
        let _ = writeln!(s, "C1 model outage <= {}: {}", pcfg.outage_threshold, flag(report.connectivity_ok));
        let _ = writeln!(
            s,
            "C2 step <= {:.3} m: {} (max {:.3} m)",
            pcfg.step_radius(),
            flag(report.spacing_ok),
            report.max_step
        );
        let _ = writeln!(s, "C3 endpoints: {}", flag(report.endpoints_ok));
        let _ = writeln!(
            s,
            "ground truth: {} waypoints above P0, max disconnection {:.2} s ({})",
            report.true_violations.len(),
            report.max_disconnection_s,
            flag(report.ground_truth_ok)
        );
        let _ = write!(s, "verdict: {}", if report.verdict() { "pass" } else { "fail" });
        Ok((report.verdict(), s))
    })();
    let artifacts: Vec<PathBuf> = out.map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    match result {
        Ok((true, s)) => CommandOutcome::ok(artifacts, s),
        Ok((false, s)) => CommandOutcome {
            status: Status::ValidationFailed,
            artifacts,
            summary: s,
        },
        Err(e) => CommandOutcome::from_error(e, vec![]),
    }
}

struct PlanJob {
    pair: usize,
    p0_idx: usize,
    seed: usize,
}

struct PlanResult {
    path: Path,
    verdict: bool,
    true_violations: usize,
    max_disconnection_s: f64,
    ground_truth_ok: bool,
}

/// End-to-end: truth map, training, model map, then plans for every
/// configured pair, P0 and planner seed, each validated against the truth.
pub fn cmd_run(cfg: &ScenarioConfig, out_dir: &FsPath) -> CommandOutcome {
    let mut artifacts = Vec::new();
    match run_pipeline(cfg, out_dir, &mut artifacts) {
        Ok(Ok(s)) => CommandOutcome::ok(artifacts, s),
        Ok(Err((status, s))) => CommandOutcome {
            status,
            artifacts,
            summary: s,
        },
        Err(e) => CommandOutcome::from_error(e, artifacts),
    }
}

fn run_pipeline(
    cfg: &ScenarioConfig,
    out_dir: &FsPath,
    artifacts: &mut Vec<PathBuf>,
) -> Result<std::result::Result<String, (Status, String)>> {
    check_config(cfg)?;
    let airspace = cfg.airspace()?;
    let ev = cfg.evaluation;

    let truth_file = out_dir.join("truth_map.csv");
    let truth = evaluate_truth_map(&airspace, ev.resolution, ev.n_mc, derive_stream(cfg.master_seed, "truth", 0))?;
    truth.write_csv(create_file(&truth_file)?)?;
    artifacts.push(truth_file);

    let outcome = train(&cfg.training, &airspace, &[cfg.flight], cfg.master_seed)?;
    let model = RadioModel::new(outcome.params, cfg.area);
    let model_file = out_dir.join("model.json");
    save_model(&model, &model_file)?;
    artifacts.push(model_file);
    let metrics_file = out_dir.join("metrics.csv");
    write_metrics_csv(&outcome.history, create_file(&metrics_file)?)?;
    artifacts.push(metrics_file);

    let model_map = evaluate_model_map(&model, &cfg.area, ev.resolution)?;
    let map_file = out_dir.join("model_map.csv");
    model_map.write_csv(create_file(&map_file)?)?;
    artifacts.push(map_file);
    let agree = truth
        .values
        .iter()
        .zip(&model_map.values)
        .filter(|(t, m)| (**t > 0.5) == (**m > 0.5))
        .count() as f64
        / truth.values.len() as f64;

    let runs = &cfg.runs;
    let jobs: Vec<PlanJob> = (0..runs.pairs.len())
        .flat_map(|pair| {
            (0..runs.p0_sweep.len())
                .flat_map(move |p0_idx| (0..runs.plan_seeds).map(move |seed| PlanJob { pair, p0_idx, seed }))
        })
        .collect();
    // The planner seed depends on (pair, seed) only, so every P0 in the
    // sweep sees the same sample sequence.
    let results: Vec<Result<std::result::Result<PlanResult, Infeasible>>> = jobs
        .par_iter()
        .map(|job| {
            let [sx, sy, gx, gy] = runs.pairs[job.pair];
            let pcfg = cfg.planner_config(runs.p0_sweep[job.p0_idx]);
            let mut rng = stream(cfg.master_seed, "plan", ((job.pair as u64) << 32) | job.seed as u64);
            let path = match plan(&pcfg, &model, [sx, sy], [gx, gy], &mut rng)? {
                Ok(p) => p,
                Err(e) => return Ok(Err(e)),
            };
            let k = (((job.pair * runs.p0_sweep.len()) + job.p0_idx) * runs.plan_seeds + job.seed) as u64;
            let mut vrng = stream(cfg.master_seed, "validate", k);
            let report = validate_path(&path, Some(([sx, sy], [gx, gy])), &model, &pcfg, &airspace, ev.n_mc, &mut vrng)?;
            Ok(Ok(PlanResult {
                path,
                verdict: report.verdict(),
                true_violations: report.true_violations.len(),
                max_disconnection_s: report.max_disconnection_s,
                ground_truth_ok: report.ground_truth_ok,
            }))
        })
        .collect();

    let mut summary = csv::Writer::from_writer(Vec::new());
    summary
        .write_record([
            "pair",
            "p0",
            "seed",
            "waypoints",
            "length_m",
            "flight_time_s",
            "verdict",
            "true_violations",
            "max_disconnection_s",
            "ground_truth_ok",
        ])
        .map_err(|e| Error::parse("summary", e))?;
    let mut lengths = vec![Vec::new(); runs.p0_sweep.len()];
    let mut failure = None;
    for (job, res) in jobs.iter().zip(results) {
        let p0 = runs.p0_sweep[job.p0_idx];
        let tag = format!("pair {} P0 {} seed {}", job.pair, p0, job.seed);
        let r = match res? {
            Ok(r) => r,
            Err(why) => {
                failure = Some((Status::Infeasible, format!("{tag}: infeasible: {why}")));
                break;
            }
        };
        let file = out_dir
            .join("paths")
            .join(format!("pair{}_p0_{}_seed{}.csv", job.pair, p0, job.seed));
        write_path_csv(&path_rows(&r.path, &model), create_file(&file)?)?;
        artifacts.push(file);
        summary
            .serialize((
                job.pair,
                p0,
                job.seed,
                r.path.waypoints.len(),
                r.path.length,
                r.path.flight_time,
                r.verdict,
                r.true_violations,
                r.max_disconnection_s,
                r.ground_truth_ok,
            ))
            .map_err(|e| Error::parse("summary", e))?;
        lengths[job.p0_idx].push(r.path.length);
        if !r.verdict {
            failure = Some((Status::ValidationFailed, format!("{tag}: path violates the model constraints")));
            break;
        }
    }
    let summary_file = out_dir.join("plans.csv");
    let bytes = summary.into_inner().map_err(|e| Error::parse("summary", e))?;
    write_text(&summary_file, std::str::from_utf8(&bytes).expect("csv output is utf-8"))?;
    artifacts.push(summary_file);
    if let Some(f) = failure {
        return Ok(Err(f));
    }

    let mut text = format!(
        "final loss {:.4}, map agreement at 0.5: {:.3}",
        outcome.history.last().map_or(f64::NAN, |m| m.global_loss),
        agree
    );
    for (p0, ls) in runs.p0_sweep.iter().zip(&lengths) {
        if !ls.is_empty() {
            let _ = write!(text, "; P0 {p0}: mean length {:.1} m", ls.iter().sum::<f64>() / ls.len() as f64);
        }
    }
    Ok(Ok(text))
}

#[derive(Debug, Parser)]
#[command(name = "uavmap", version, about = "Federated radio mapping and connectivity-aware UAV path planning")]
struct Cli {
    /// Scenario TOML file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (output directory for `run`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo ground-truth outage map.
    Truth {
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        n_mc: Option<usize>,
    },
    /// Federated training of the radio map model.
    Map {
        /// Metrics CSV; defaults to metrics.csv next to the model.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Plan a path on a trained model.
    Plan {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = parse_point)]
        start: [f64; 2],
        #[arg(long, value_parser = parse_point)]
        goal: [f64; 2],
        #[arg(long)]
        p0: Option<f64>,
    },
    /// Validate a path file against the model and Monte-Carlo truth.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        n_mc: Option<usize>,
        #[arg(long)]
        p0: Option<f64>,
        #[command(flatten)]
        endpoints: EndpointArgs,
    },
    /// Truth map, training, planning and validation in one go.
    Run,
}

#[derive(Debug, Args)]
struct EndpointArgs {
    #[arg(long, value_parser = parse_point, requires = "goal")]
    start: Option<[f64; 2]>,
    #[arg(long, value_parser = parse_point, requires = "start")]
    goal: Option<[f64; 2]>,
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok([parse(x)?, parse(y)?])
}

/// Parse `args` (including the program name) and execute the command.
pub fn run<I, T>(args: I) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let status = if e.use_stderr() { Status::ConfigError } else { Status::Success };
            return CommandOutcome {
                status,
                artifacts: vec![],
                summary: e.render().to_string(),
            };
        }
    };
    let mut cfg = match resolve_config(cli.config.as_deref(), cli.seed) {
        Ok(c) => c,
        Err(e) => {
            return CommandOutcome {
                status: match e {
                    Error::Io { .. } => Status::Failure,
                    _ => Status::ConfigError,
                },
                artifacts: vec![],
                summary: format!("error: {e}"),
            }
        }
    };
    let out = cli.out;
    match cli.command {
        Command::Truth { resolution, n_mc } => cmd_truth(
            &cfg,
            resolution.unwrap_or(cfg.evaluation.resolution),
            n_mc.unwrap_or(cfg.evaluation.n_mc),
            &out.unwrap_or_else(|| "truth_map.csv".into()),
        ),
        Command::Map { metrics, rounds } => {
            if let Some(r) = rounds {
                cfg.training.rounds = r;
            }
            let model = out.unwrap_or_else(|| "model.json".into());
            let metrics = metrics.unwrap_or_else(|| model.with_file_name("metrics.csv"));
            cmd_map(&cfg, &model, &metrics)
        }
        Command::Plan {
            model,
            start,
            goal,
            p0,
        } => cmd_plan(&cfg, &model, start, goal, p0, &out.unwrap_or_else(|| "path.csv".into())),
        Command::Validate {
            model,
            path,
            n_mc,
            p0,
            endpoints,
        } => {
            let ends = endpoints.start.zip(endpoints.goal);
            cmd_validate(
                &cfg,
                &path,
                &model,
                n_mc.unwrap_or(cfg.evaluation.n_mc),
                p0,
                ends,
                out.as_deref(),
            )
        }
        Command::Run => cmd_run(&cfg, &out.unwrap_or_else(|| "run".into())),
    }
}
