//! Scenario configuration, seed derivation, radio-map grids and the on-disk
//! formats for models, grids, paths and training metrics.
//!
//! Configuration is TOML with unknown keys rejected. Everything else is
//! plain decimal text (JSON for models, CSV for the rest) so artifacts stay
//! diffable and round-trip without loss.

use std::fs;
use std::io::Write;
use std::path::Path as FsPath;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{dbm_to_mw, Airspace, ChannelParams, FadingModel, GbsSite, Position, Scene, SPEED_OF_LIGHT};
use crate::fedmap::{FlightPolicy, RoundMetrics, TrainingConfig};
use crate::neuralnet::RadioModel;
use crate::planner::{OutageMap, Path, PlannerConfig};
use crate::{Bounds, Error, Result};

/// Seed for an independent random stream, derived from the master seed and
/// a (label, index) pair by hashing. Distinct pairs give unrelated streams.
pub fn derive_stream(master_seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn stream(master_seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_stream(master_seed, label, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
    pub tx_power_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_freq_hz: f64,
    pub eta_los: f64,
    pub eta_nlos: f64,
    pub los_a: f64,
    pub los_b: f64,
    pub noise_dbm: f64,
    /// Linear ratio.
    pub sinr_threshold: f64,
    pub full_path_loss: bool,
    pub fading_scale: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            carrier_freq_hz: 2e9,
            eta_los: 1.0,
            eta_nlos: 20.0,
            los_a: 5.0,
            los_b: 0.5,
            noise_dbm: -140.0,
            sinr_threshold: 0.65,
            full_path_loss: false,
            fading_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityConfig {
    /// P0
    pub outage_threshold: f64,
    /// delta, seconds
    pub delta_s: f64,
    pub v_max: f64,
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        ConnectivityConfig {
            outage_threshold: 0.3,
            delta_s: 5.0,
            v_max: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSettings {
    pub max_iterations: usize,
    pub goal_bias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_tolerance: Option<f64>,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        PlannerSettings {
            max_iterations: 5000,
            goal_bias: 0.05,
            goal_tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Cells per axis for Monte-Carlo and model maps.
    pub resolution: usize,
    /// Fading draws per Monte-Carlo cell or waypoint.
    pub n_mc: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            resolution: 50,
            n_mc: 2000,
        }
    }
}

/// End-to-end run plan: start/goal pairs, a P0 sweep and planner seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `[x_start, y_start, x_goal, y_goal]`
    pub pairs: Vec<[f64; 4]>,
    pub p0_sweep: Vec<f64>,
    pub plan_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pairs: vec![[2300.0, 2600.0, 2800.0, 2300.0]],
            p0_sweep: vec![0.05, 0.3, 0.4],
            plan_seeds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub master_seed: u64,
    pub uav_altitude: f64,
    pub area: Bounds,
    pub gbs: Vec<SiteConfig>,
    pub channel: ChannelConfig,
    pub connectivity: ConnectivityConfig,
    pub training: TrainingConfig,
    pub flight: FlightPolicy,
    pub planner: PlannerSettings,
    pub evaluation: EvaluationConfig,
    pub runs: RunConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        // Illustrative asymmetric layout; the published figure gives no
        // coordinates.
        let gbs = [
            (2500.0, 2500.0),
            (7000.0, 2000.0),
            (5200.0, 5600.0),
            (1800.0, 7800.0),
            (8200.0, 7600.0),
        ]
        .iter()
        .map(|&(x, y)| SiteConfig {
            x,
            y,
            z: 0.0,
            tx_power_mw: 200.0,
        })
        .collect();
        ScenarioConfig {
            master_seed: 1,
            uav_altitude: 100.0,
            area: Bounds {
                x_min: 0.0,
                y_min: 0.0,
                x_max: 10_000.0,
                y_max: 10_000.0,
            },
            gbs,
            channel: ChannelConfig::default(),
            connectivity: ConnectivityConfig::default(),
            training: TrainingConfig::default(),
            flight: FlightPolicy::default(),
            planner: PlannerSettings::default(),
            evaluation: EvaluationConfig::default(),
            runs: RunConfig::default(),
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.area.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.uav_altitude >= 0.0 && self.uav_altitude.is_finite()) {
            return Err(Error::Config(format!("uav_altitude must be non-negative, got {}", self.uav_altitude)));
        }
        if self.gbs.is_empty() {
            return Err(Error::Config("at least one [[gbs]] site is required".into()));
        }
        for (i, s) in self.gbs.iter().enumerate() {
            check_positive(&format!("gbs[{i}].tx_power_mw"), s.tx_power_mw)?;
            if s.z < 0.0 || !s.z.is_finite() || !s.x.is_finite() || !s.y.is_finite() {
                return Err(Error::Config(format!("gbs[{i}] has an invalid position")));
            }
        }
        let c = &self.channel;
        check_positive("channel.fading_scale", c.fading_scale)?;
        if !c.noise_dbm.is_finite() {
            return Err(Error::Config("channel.noise_dbm must be finite".into()));
        }
        self.channel_params()
            .validate()
            .map_err(|e| Error::Config(format!("channel: {e}")))?;
        check_positive("connectivity.delta_s", self.connectivity.delta_s)?;
        check_positive("connectivity.v_max", self.connectivity.v_max)?;
        self.training.validate()?;
        self.flight.validate()?;
        if self.evaluation.resolution < 2 || self.evaluation.n_mc == 0 {
            return Err(Error::Config("evaluation needs resolution >= 2 and n_mc >= 1".into()));
        }
        for &p0 in &self.runs.p0_sweep {
            self.planner_config(p0).validate()?;
        }
        self.planner_config(self.connectivity.outage_threshold).validate()?;
        for pair in &self.runs.pairs {
            if !self.area.contains([pair[0], pair[1]]) || !self.area.contains([pair[2], pair[3]]) {
                return Err(Error::Config(format!("run pair {pair:?} leaves the area")));
            }
        }
        Ok(())
    }

    pub fn channel_params(&self) -> ChannelParams {
        let c = &self.channel;
        ChannelParams {
            carrier_freq: c.carrier_freq_hz,
            light_speed: SPEED_OF_LIGHT,
            eta_los: c.eta_los,
            eta_nlos: c.eta_nlos,
            los_a: c.los_a,
            los_b: c.los_b,
            noise_power: dbm_to_mw(c.noise_dbm),
            sinr_threshold: c.sinr_threshold,
            use_full_path_loss: c.full_path_loss,
        }
    }

    pub fn airspace(&self) -> Result<Airspace> {
        let sites = self
            .gbs
            .iter()
            .map(|s| GbsSite::new(Position::new(s.x, s.y, s.z)?, s.tx_power_mw))
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene::new(
            sites,
            self.channel_params(),
            FadingModel::rayleigh(self.channel.fading_scale)?,
        )?;
        Airspace::new(scene, self.area, self.uav_altitude)
    }

    pub fn planner_config(&self, p0: f64) -> PlannerConfig {
        PlannerConfig {
            max_iterations: self.planner.max_iterations,
            delta: self.connectivity.delta_s,
            v_max: self.connectivity.v_max,
            outage_threshold: p0,
            goal_bias: self.planner.goal_bias,
            goal_tolerance: self.planner.goal_tolerance,
            bounds: self.area,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::parse("config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_config(path: &FsPath) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        Error::Parse { msg, .. } => Error::parse(path.display().to_string(), msg),
        other => other,
    })
}

pub fn save_config(cfg: &ScenarioConfig, path: &FsPath) -> Result<()> {
    write_text(path, &cfg.to_toml())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Model,
    MonteCarlo,
}

/// Outage probabilities at the cell centers of a regular grid, stored row
/// by row (y outer, x inner).
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMapGrid {
    pub resolution: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

pub fn cell_centers(bounds: &Bounds, resolution: usize) -> (Vec<f64>, Vec<f64>) {
    let n = resolution as f64;
    let xs = (0..resolution)
        .map(|i| bounds.x_min + (i as f64 + 0.5) * bounds.width() / n)
        .collect();
    let ys = (0..resolution)
        .map(|j| bounds.y_min + (j as f64 + 0.5) * bounds.height() / n)
        .collect();
    (xs, ys)
}

impl RadioMapGrid {
    pub fn cells(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.ys
            .iter()
            .flat_map(move |&y| self.xs.iter().map(move |&x| [x, y]))
            .zip(self.values.iter().copied())
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.resolution + ix]
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "outage"]).map_err(|e| Error::parse("grid", e))?;
        for (q, v) in self.cells() {
            w.serialize((q[0], q[1], v)).map_err(|e| Error::parse("grid", e))?;
        }
        w.flush().map_err(|e| Error::parse("grid", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R, provenance: Provenance) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        check_header(&mut r, &["x", "y", "outage"], "grid")?;
        let mut cells: Vec<(f64, f64, f64)> = Vec::new();
        for rec in r.deserialize() {
            cells.push(rec.map_err(|e| Error::parse("grid", e))?);
        }
        let resolution = (cells.len() as f64).sqrt().round() as usize;
        if resolution < 1 || resolution * resolution != cells.len() {
            return Err(Error::parse("grid", format!("{} cells do not form a square grid", cells.len())));
        }
        let xs: Vec<f64> = cells[..resolution].iter().map(|c| c.0).collect();
        let ys: Vec<f64> = cells.iter().step_by(resolution).map(|c| c.1).collect();
        for (k, c) in cells.iter().enumerate() {
            if c.0 != xs[k % resolution] || c.1 != ys[k / resolution] {
                return Err(Error::parse("grid", format!("cell {} (data row {}) is out of row-major order", k, k + 1)));
            }
            if !(0.0..=1.0).contains(&c.2) {
                return Err(Error::parse("grid", format!("outage {} at data row {} outside [0, 1]", c.2, k + 1)));
            }
        }
        Ok(RadioMapGrid {
            resolution,
            xs,
            ys,
            values: cells.into_iter().map(|c| c.2).collect(),
            provenance,
        })
    }
}

/// Model outage at every cell center.
pub fn evaluate_model_map<M: OutageMap + ?Sized>(model: &M, bounds: &Bounds, resolution: usize) -> Result<RadioMapGrid> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2".into()));
    }
    let (xs, ys) = cell_centers(bounds, resolution);
    let values = ys
        .par_iter()
        .flat_map_iter(|&y| xs.iter().map(move |&x| [x, y]))
        .map(|q| model.outage(q).ok_or_else(|| Error::Geometry(format!("cell {q:?} outside the model area"))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RadioMapGrid {
        resolution,
        xs,
        ys,
        values,
        provenance: Provenance::Model,
    })
}

/// Monte-Carlo outage at every cell center. Each cell draws from its own
/// derived stream, so the result does not depend on evaluation order.
pub fn evaluate_truth_map(airspace: &Airspace, resolution: usize, n_mc: usize, seed: u64) -> Result<RadioMapGrid> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2".into()));
    }
    let (xs, ys) = cell_centers(&airspace.bounds, resolution);
    let values = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let q = [xs[k % resolution], ys[k / resolution]];
            airspace.outage(q, n_mc, &mut stream(seed, "truth-cell", k as u64))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RadioMapGrid {
        resolution,
        xs,
        ys,
        values,
        provenance: Provenance::MonteCarlo,
    })
}

fn check_header<R: std::io::Read>(r: &mut csv::Reader<R>, expected: &[&str], what: &str) -> Result<()> {
    let header = r.headers().map_err(|e| Error::parse(what, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            what,
            format!("expected header {:?}, found {:?}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

/// One row of a persisted path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub n: usize,
    pub x: f64,
    pub y: f64,
    pub cum_length_m: f64,
    pub model_outage: f64,
}

pub fn path_rows<M: OutageMap + ?Sized>(path: &Path, model: &M) -> Vec<PathRow> {
    path.waypoints
        .iter()
        .zip(path.cumulative_lengths())
        .enumerate()
        .map(|(n, (q, cum))| PathRow {
            n,
            x: q[0],
            y: q[1],
            cum_length_m: cum,
            model_outage: model.outage(*q).unwrap_or(f64::NAN),
        })
        .collect()
}

pub fn write_path_csv<W: std::io::Write>(rows: &[PathRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse("path", e))?;
    }
    if rows.is_empty() {
        w.write_record(["n", "x", "y", "cum_length_m", "model_outage"]).map_err(|e| Error::parse("path", e))?;
    }
    w.flush().map_err(|e| Error::parse("path", e))?;
    Ok(())
}

pub fn read_path_csv<R: std::io::Read>(input: R) -> Result<Vec<PathRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &["n", "x", "y", "cum_length_m", "model_outage"], "path")?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<PathRow>, _>>()
        .map_err(|e| Error::parse("path", e))?;
    for (i, row) in rows.iter().enumerate() {
        if row.n != i {
            return Err(Error::parse("path", format!("row {} has index {}, expected {i}", i + 1, row.n)));
        }
    }
    Ok(rows)
}

pub fn path_from_rows(rows: &[PathRow], v_max: f64) -> Path {
    Path::from_waypoints(rows.iter().map(|r| [r.x, r.y]).collect(), v_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct MetricsRow {
    round: usize,
    global_loss: f64,
    total_samples: usize,
}

pub fn write_metrics_csv<W: std::io::Write>(history: &[RoundMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "global_loss", "total_samples"]).map_err(|e| Error::parse("metrics", e))?;
    for m in history {
        w.serialize((m.round, m.global_loss, m.total_samples)).map_err(|e| Error::parse("metrics", e))?;
    }
    w.flush().map_err(|e| Error::parse("metrics", e))?;
    Ok(())
}

/// `(round, global_loss, total_samples)` rows.
pub fn read_metrics_csv<R: std::io::Read>(input: R) -> Result<Vec<(usize, f64, usize)>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &["round", "global_loss", "total_samples"], "metrics")?;
    r.deserialize()
        .map(|rec| {
            rec.map(|m: MetricsRow| (m.round, m.global_loss, m.total_samples))
                .map_err(|e| Error::parse("metrics", e))
        })
        .collect()
}

pub fn save_model(model: &RadioModel, path: &FsPath) -> Result<()> {
    write_text(path, &model.to_json())
}

pub fn load_model(path: &FsPath) -> Result<RadioModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RadioModel::from_json(&text)
}

pub(crate) fn write_text(path: &FsPath, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_file(path: &FsPath) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn open_file(path: &FsPath) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}
