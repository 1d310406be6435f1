//! Experiment orchestration: configuration, the settings grid, training and
//! evaluation pipelines, artifacts and comparisons.
//!
//! Artifacts of one run live in `<out_dir>/<policy>/<setting>/`; an artifact
//! set for [`compare`] is a `<out_dir>/<policy>` directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dqn::{train, QNetwork, RewardRule, ScenarioSource, TrainSchedule};
use crate::error::{Error, Result};
use crate::instance::{builtin_geography, Geography, GeographyId, ServiceParams};
use crate::interday::{
    relative_improvement, run_horizon, summarize, DemandModel, HorizonConfig, HorizonMetrics, HorizonResult,
};
use crate::intraday::FeatureScaler;
use crate::policies::{build_policy, rrl_rewards, PolicyKind};
use crate::seeds::{derive_seed, STREAM_TRAIN_INIT, STREAM_TRAIN_POOL};
use crate::shaping::{shape_equal, shape_priority, PriorityAssignment};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SDD_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";

pub const ALPHA_GRID: [f64; 3] = [0.25, 0.5, 0.75];

/// 0.50, 0.55, ..., 0.85.
pub fn r_bar_grid() -> Vec<f64> {
    (0..8).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Capacitated,
    Uncapacitated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub geography: GeographyId,
    pub model: ModelKind,
    pub alpha: f64,
    pub r_bar: f64,
    pub policy: PolicyKind,
    pub horizon: HorizonConfig,
    /// Fleet and clock before scaling.
    pub service: ServiceParams,
    pub speed_kmh: f64,
    pub circuity: f64,
    pub replications: usize,
    pub seed: u64,
    /// Divisor for demands, caps and fleet size.
    pub scale: f64,
    /// Prioritized regions for IRL-P; `None` picks them from the geography.
    pub priority: Option<Vec<usize>>,
    pub train: TrainSchedule,
    /// Explicit weights file; by default weights live under `out_dir/weights`.
    pub weights: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        let geo = builtin_geography(GeographyId::A);
        ExperimentConfig {
            geography: GeographyId::A,
            model: ModelKind::Capacitated,
            alpha: 0.5,
            r_bar: 0.8,
            policy: PolicyKind::Myopic,
            horizon: HorizonConfig::default(),
            service: ServiceParams::default(),
            speed_kmh: geo.speed_kmh,
            circuity: geo.circuity_factor,
            replications: 20,
            seed: 1,
            scale: 10.0,
            priority: None,
            train: TrainSchedule::default(),
            weights: None,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse `{value}`")))
}

impl ExperimentConfig {
    /// Sets one configuration key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "geography" => self.geography = v.parse()?,
            "model" => {
                self.model = match v.to_ascii_lowercase().as_str() {
                    "capacitated" => ModelKind::Capacitated,
                    "uncapacitated" => ModelKind::Uncapacitated,
                    _ => {
                        return Err(Error::config(format!(
                            "model: expected capacitated or uncapacitated, got `{v}`"
                        )))
                    }
                }
            }
            "alpha" => self.alpha = parse_num(key, v)?,
            "r_bar" => self.r_bar = parse_num(key, v)?,
            "policy" => self.policy = v.parse()?,
            "days" => self.horizon.days = parse_num(key, v)?,
            "update_interval" => self.horizon.update_interval = parse_num(key, v)?,
            "vehicles" => self.service.vehicles = parse_num(key, v)?,
            "request_window" => self.service.request_window = parse_num(key, v)?,
            "shift_end" => self.service.shift_end = parse_num(key, v)?,
            "deadline_offset" => self.service.deadline_offset = parse_num(key, v)?,
            "load_time" => self.service.load_time = parse_num(key, v)?,
            "service_time" => self.service.service_time = parse_num(key, v)?,
            "speed_kmh" => self.speed_kmh = parse_num(key, v)?,
            "circuity" => self.circuity = parse_num(key, v)?,
            "replications" => self.replications = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "scale" => self.scale = parse_num(key, v)?,
            "priority" => {
                self.priority = if v.is_empty() || v == "auto" {
                    None
                } else {
                    Some(
                        v.split(',')
                            .map(|s| parse_num::<usize>(key, s))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "weights" => self.weights = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "out_dir" => self.out_dir = PathBuf::from(v),
            "train.episodes" => self.train.episodes = parse_num(key, v)?,
            "train.epsilon_start" => self.train.epsilon_start = parse_num(key, v)?,
            "train.epsilon_end" => self.train.epsilon_end = parse_num(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.gamma" => self.train.gamma = parse_num(key, v)?,
            "train.target_sync" => self.train.target_sync = parse_num(key, v)?,
            "train.replay_capacity" => self.train.replay_capacity = parse_num(key, v)?,
            "train.train_pool" => self.train.train_pool = parse_num(key, v)?,
            "train.test_pool" => self.train.test_pool = parse_num(key, v)?,
            other => return Err(Error::config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("config", format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    /// Every key with its resolved value; feeding it back reproduces `self`.
    pub fn to_text(&self) -> String {
        let model = match self.model {
            ModelKind::Capacitated => "capacitated",
            ModelKind::Uncapacitated => "uncapacitated",
        };
        let priority = match &self.priority {
            None => "auto".to_string(),
            Some(p) => p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
        };
        let t = &self.train;
        let s = &self.service;
        let pairs: Vec<(&str, String)> = vec![
            ("geography", self.geography.to_string()),
            ("model", model.to_string()),
            ("alpha", self.alpha.to_string()),
            ("r_bar", self.r_bar.to_string()),
            ("policy", self.policy.to_string()),
            ("days", self.horizon.days.to_string()),
            ("update_interval", self.horizon.update_interval.to_string()),
            ("vehicles", s.vehicles.to_string()),
            ("request_window", s.request_window.to_string()),
            ("shift_end", s.shift_end.to_string()),
            ("deadline_offset", s.deadline_offset.to_string()),
            ("load_time", s.load_time.to_string()),
            ("service_time", s.service_time.to_string()),
            ("speed_kmh", self.speed_kmh.to_string()),
            ("circuity", self.circuity.to_string()),
            ("replications", self.replications.to_string()),
            ("seed", self.seed.to_string()),
            ("scale", self.scale.to_string()),
            ("priority", priority),
            (
                "weights",
                self.weights.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("out_dir", self.out_dir.display().to_string()),
            ("train.episodes", t.episodes.to_string()),
            ("train.epsilon_start", t.epsilon_start.to_string()),
            ("train.epsilon_end", t.epsilon_end.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.gamma", t.gamma.to_string()),
            ("train.target_sync", t.target_sync.to_string()),
            ("train.replay_capacity", t.replay_capacity.to_string()),
            ("train.train_pool", t.train_pool.to_string()),
            ("train.test_pool", t.test_pool.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn demand_model(&self) -> DemandModel {
        match self.model {
            ModelKind::Capacitated => DemandModel::Capacitated {
                alpha: self.alpha,
                caps: self.resolved_geography().demand_caps(),
            },
            ModelKind::Uncapacitated => DemandModel::Uncapacitated { threshold: self.r_bar },
        }
    }

    /// Built-in geography with scaling and travel overrides applied.
    pub fn resolved_geography(&self) -> Geography {
        let mut geo = builtin_geography(self.geography).scaled(self.scale);
        geo.speed_kmh = self.speed_kmh;
        geo.circuity_factor = self.circuity;
        geo
    }

    /// Service parameters with the fleet divided by `scale` (at least one vehicle).
    pub fn resolved_service(&self) -> ServiceParams {
        let mut p = self.service.clone();
        p.vehicles = ((p.vehicles as f64 / self.scale).floor() as usize).max(1);
        p
    }

    /// Identifier of the grid cell, e.g. `a-cap-0.5`.
    pub fn setting_id(&self) -> String {
        let label = match self.model {
            ModelKind::Capacitated => format!("cap-{}", self.alpha),
            ModelKind::Uncapacitated => format!("uncap-{}", self.r_bar),
        };
        format!("{}-{label}", self.geography)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.policy.as_str()).join(self.setting_id())
    }

    /// Weights used by the policy, if it is a learned one.
    pub fn weights_path(&self) -> Option<PathBuf> {
        let kind = self.policy.network_kind()?;
        Some(self.weights.clone().unwrap_or_else(|| {
            self.out_dir.join("weights").join(format!(
                "{}-{}-x{}-s{}-e{}.txt",
                self.geography, kind, self.scale, self.seed, self.train.episodes
            ))
        }))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 1.0) || !self.scale.is_finite() {
            return Err(Error::config("scale must be >= 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be > 0"));
        }
        if !(self.speed_kmh > 0.0) || !(self.circuity >= 1.0) {
            return Err(Error::config("speed_kmh must be > 0 and circuity >= 1"));
        }
        self.horizon.validate()?;
        self.service.validate()?;
        self.train.validate()?;
        let geo = self.resolved_geography();
        geo.validate()?;
        self.demand_model().validate(geo.num_regions())?;
        if let Some(p) = &self.priority {
            PriorityAssignment::from_regions(geo.num_regions(), p)?;
        }
        Ok(())
    }
}

/// The 33 settings: 3 geographies, each with 3 capacitated and 8 uncapacitated models.
pub fn experiment_grid(scale: f64, base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut out = Vec::with_capacity(33);
    for geography in GeographyId::ALL {
        for alpha in ALPHA_GRID {
            out.push(ExperimentConfig {
                geography,
                model: ModelKind::Capacitated,
                alpha,
                scale,
                ..base.clone()
            });
        }
        for r_bar in r_bar_grid() {
            out.push(ExperimentConfig {
                geography,
                model: ModelKind::Uncapacitated,
                r_bar,
                scale,
                ..base.clone()
            });
        }
    }
    out
}

/// Training days and reward for the network behind `kind`.
pub fn training_setup(
    kind: PolicyKind,
    geo: &Geography,
    priority: Option<&[usize]>,
) -> Result<(ScenarioSource, RewardRule)> {
    let initial = geo.initial_demands();
    Ok(match kind.network_kind() {
        Some(PolicyKind::Intraday) => (ScenarioSource::Fixed(initial), RewardRule::Unit),
        Some(PolicyKind::Rrl) => (
            ScenarioSource::Fixed(initial.clone()),
            RewardRule::PerRegion(rrl_rewards(&initial)?),
        ),
        Some(PolicyKind::IrlE) => (ScenarioSource::Shaped(shape_equal(geo)), RewardRule::Unit),
        Some(PolicyKind::IrlP) => {
            let prio = match priority {
                Some(p) => PriorityAssignment::from_regions(geo.num_regions(), p)?,
                None => PriorityAssignment::default_for(geo),
            };
            (ScenarioSource::Shaped(shape_priority(geo, &prio)?), RewardRule::Unit)
        }
        _ => {
            return Err(Error::Contract(format!("policy `{kind}` is not trained")));
        }
    })
}

/// Trains the network for `cfg.policy` and writes it to the weights path.
pub fn train_policy(cfg: &ExperimentConfig) -> Result<(QNetwork, PathBuf)> {
    cfg.validate()?;
    let path = cfg
        .weights_path()
        .ok_or_else(|| Error::config(format!("policy `{}` does not learn", cfg.policy)))?;
    let geo = cfg.resolved_geography();
    let params = cfg.resolved_service();
    let (source, reward) = training_setup(cfg.policy, &geo, cfg.priority.as_deref())?;
    let outcome = train(&geo, &params, &source, &reward, &cfg.train, cfg.seed)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    outcome.network.save(&path)?;
    Ok((outcome.network, path))
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub summary: PathBuf,
    pub trajectory: PathBuf,
    pub daily: PathBuf,
    pub config_echo: PathBuf,
    pub seed_ledger: PathBuf,
    pub weights: Option<PathBuf>,
    pub metrics: HorizonMetrics,
    pub results: Vec<HorizonResult>,
}

/// Seed of replication `k`.
pub fn replication_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add(k as u64)
}

/// Trains if needed and allowed, evaluates every replication and writes the
/// artifacts.
pub fn run_experiment(cfg: &ExperimentConfig, allow_train: bool) -> Result<RunArtifacts> {
    cfg.validate()?;
    let geo = cfg.resolved_geography();
    let params = cfg.resolved_service();
    let model = cfg.demand_model();

    let weights = cfg.weights_path();
    let network = match &weights {
        None => None,
        Some(path) if path.exists() => Some(Arc::new(QNetwork::load(path)?)),
        Some(path) if allow_train => {
            let train_cfg = ExperimentConfig {
                policy: cfg.policy.network_kind().expect("learned"),
                ..cfg.clone()
            };
            let (net, _) = train_policy(&train_cfg)?;
            debug_assert_eq!(&train_cfg.weights_path().expect("learned"), path);
            Some(Arc::new(net))
        }
        Some(path) => {
            return Err(Error::MissingWeights {
                policy: cfg.policy.to_string(),
                path: path.clone(),
            })
        }
    };
    let policy = build_policy(cfg.policy, network, FeatureScaler::new(&geo, &params))?;

    let results: Vec<HorizonResult> = (0..cfg.replications)
        .into_par_iter()
        .map(|k| {
            run_horizon(
                &geo,
                &params,
                &model,
                &cfg.horizon,
                policy.as_ref(),
                replication_seed(cfg.seed, k),
            )
        })
        .collect::<Result<_>>()?;
    let metrics = summarize(&results)?;

    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    let art = RunArtifacts {
        summary: dir.join("summary.csv"),
        trajectory: dir.join("trajectory.csv"),
        daily: dir.join("daily.csv"),
        config_echo: dir.join("config.txt"),
        seed_ledger: dir.join("seeds.csv"),
        dir,
        weights,
        metrics,
        results,
    };
    write_summary(&art.summary, &art.results, cfg.seed)?;
    write_trajectory(&art.trajectory, &art.results, cfg.horizon.update_interval)?;
    write_daily(&art.daily, &art.results)?;
    fs::write(&art.config_echo, cfg.to_text())?;
    write_seed_ledger(&art.seed_ledger, cfg)?;
    Ok(art)
}

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn write_summary(path: &Path, results: &[HorizonResult], base_seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let regions = results.first().map_or(0, |r| r.end_demand.len());
    let mut header = vec![
        "replication".to_string(),
        "seed".into(),
        "total_services".into(),
        "avg_daily_services".into(),
    ];
    header.extend((0..regions).map(|i| format!("end_demand_{i}")));
    w.write_record(&header)?;
    for (k, r) in results.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            replication_seed(base_seed, k).to_string(),
            r.total_services.to_string(),
            sig6(r.avg_daily_services),
        ];
        row.extend(r.end_demand.iter().map(|&d| sig6(d)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub replication: usize,
    pub seed: u64,
    pub total_services: u64,
    pub avg_daily_services: f64,
    pub end_demand: Vec<f64>,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let what = format!("summary {}", path.display());
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 4 {
            return Err(Error::parse(&what, "fewer than 4 columns"));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(&what, format!("bad number `{}`", &rec[i])))
        };
        rows.push(SummaryRow {
            replication: num(0)? as usize,
            seed: rec[1].parse().map_err(|_| Error::parse(&what, "bad seed"))?,
            total_services: num(2)? as u64,
            avg_daily_services: num(3)?,
            end_demand: (4..rec.len()).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub replication: usize,
    pub block: usize,
    pub region: usize,
    pub expected_demand: f64,
    /// Empty on the final post-horizon point, which has no block.
    pub requested: Option<u64>,
    pub accepted: Option<u64>,
    pub service_level: Option<f64>,
}

pub fn write_trajectory(path: &Path, results: &[HorizonResult], update_interval: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (k, r) in results.iter().enumerate() {
        let blocks = r.service_levels.len();
        for (n, demands) in r.trajectory.iter().enumerate() {
            let counts = (n < blocks).then(|| r.block_counts(n, update_interval));
            for (i, &d) in demands.iter().enumerate() {
                w.serialize(TrajectoryRow {
                    replication: k,
                    block: n,
                    region: i,
                    expected_demand: d,
                    requested: counts.as_ref().map(|c| c.requested[i]),
                    accepted: counts.as_ref().map(|c| c.accepted[i]),
                    service_level: (n < blocks).then(|| r.service_levels[n][i]),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyRow {
    pub replication: usize,
    pub day: usize,
    pub region: usize,
    pub requested: u64,
    pub accepted: u64,
}

pub fn write_daily(path: &Path, results: &[HorizonResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (k, r) in results.iter().enumerate() {
        for (day, c) in r.daily.iter().enumerate() {
            for i in 0..c.requested.len() {
                w.serialize(DailyRow {
                    replication: k,
                    day,
                    region: i,
                    requested: c.requested[i],
                    accepted: c.accepted[i],
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_daily(path: &Path) -> Result<Vec<DailyRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Every seed the run draws from, with its purpose.
pub fn write_seed_ledger(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["purpose", "index", "seed"])?;
    if cfg.policy.requires_training() {
        w.write_record([
            "train_init",
            "0",
            &derive_seed(cfg.seed, STREAM_TRAIN_INIT, 0).to_string(),
        ])?;
        for i in 0..cfg.train.train_pool {
            w.write_record([
                "train_pool",
                &i.to_string(),
                &derive_seed(cfg.seed, STREAM_TRAIN_POOL, i).to_string(),
            ])?;
        }
    }
    for k in 0..cfg.replications {
        w.write_record([
            "replication",
            &k.to_string(),
            &replication_seed(cfg.seed, k).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub setting: String,
    pub policy_services: f64,
    pub baseline_services: f64,
    pub services_improvement: f64,
    pub policy_end_demand: f64,
    pub baseline_end_demand: f64,
    pub end_demand_improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Mean of the per-setting improvements.
    pub mean_services_improvement: f64,
    pub mean_end_demand_improvement: f64,
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>10} {:>10} {:>9} {:>10} {:>10} {:>9}\n",
            "setting", "services", "baseline", "impr", "end_dem", "baseline", "impr"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>10.1} {:>10.1} {:>8.2}% {:>10.1} {:>10.1} {:>8.2}%",
                r.setting,
                r.policy_services,
                r.baseline_services,
                100.0 * r.services_improvement,
                r.policy_end_demand,
                r.baseline_end_demand,
                100.0 * r.end_demand_improvement
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>10} {:>8.2}% {:>10} {:>10} {:>8.2}%",
            "average",
            "",
            "",
            100.0 * self.mean_services_improvement,
            "",
            "",
            100.0 * self.mean_end_demand_improvement
        );
        out
    }
}

fn artifact_set(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let summary = path.join("summary.csv");
        if summary.is_file() {
            let name = path.file_name().expect("entry name").to_string_lossy().into_owned();
            out.insert(name, summary);
        }
    }
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-setting and grid-average improvement of `policy_dir` over `baseline_dir`.
pub fn compare(policy_dir: &Path, baseline_dir: &Path) -> Result<Comparison> {
    let policy = artifact_set(policy_dir)?;
    let baseline = artifact_set(baseline_dir)?;
    let only_policy: Vec<&String> = policy.keys().filter(|k| !baseline.contains_key(*k)).collect();
    let only_baseline: Vec<&String> = baseline.keys().filter(|k| !policy.contains_key(*k)).collect();
    if !only_policy.is_empty() || !only_baseline.is_empty() || policy.is_empty() {
        return Err(Error::config(format!(
            "grid mismatch: missing from baseline {only_policy:?}, missing from policy {only_baseline:?}"
        )));
    }
    let mut rows = Vec::with_capacity(policy.len());
    for (setting, p_path) in &policy {
        let p = read_summary(p_path)?;
        let b = read_summary(&baseline[setting])?;
        if p.len() != b.len() {
            return Err(Error::config(format!(
                "{setting}: replication count mismatch ({} vs {})",
                p.len(),
                b.len()
            )));
        }
        let ps = mean(p.iter().map(|r| r.avg_daily_services));
        let bs = mean(b.iter().map(|r| r.avg_daily_services));
        let pe = mean(p.iter().map(|r| r.end_demand.iter().sum::<f64>()));
        let be = mean(b.iter().map(|r| r.end_demand.iter().sum::<f64>()));
        rows.push(ComparisonRow {
            setting: setting.clone(),
            policy_services: ps,
            baseline_services: bs,
            services_improvement: relative_improvement(ps, bs),
            policy_end_demand: pe,
            baseline_end_demand: be,
            end_demand_improvement: relative_improvement(pe, be),
        });
    }
    Ok(Comparison {
        mean_services_improvement: mean(rows.iter().map(|r| r.services_improvement)),
        mean_end_demand_improvement: mean(rows.iter().map(|r| r.end_demand_improvement)),
        rows,
    })
}

/// Printable summary of one run.
pub fn summary_table(cfg: &ExperimentConfig, m: &HorizonMetrics) -> String {
    let mut out = format!(
        "{} {} ({} replications)\n  avg daily services  {:.2} +- {:.2}\n  end demand (total)  {:.2} +- {:.2}\n",
        cfg.policy,
        cfg.setting_id(),
        m.replications,
        m.avg_daily_services.mean,
        m.avg_daily_services.std_err,
        m.end_demand.mean,
        m.end_demand.std_err
    );
    for (i, e) in m.end_demand_per_region.iter().enumerate() {
        let _ = writeln!(out, "  end demand region {i}  {:.2} +- {:.2}", e.mean, e.std_err);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_33_settings() {
        let grid = experiment_grid(1.0, &ExperimentConfig::default());
        assert_eq!(grid.len(), 33);
        for g in GeographyId::ALL {
            assert_eq!(grid.iter().filter(|c| c.geography == g).count(), 11);
        }
        let alphas: Vec<f64> = grid
            .iter()
            .filter(|c| c.geography == GeographyId::A && c.model == ModelKind::Capacitated)
            .map(|c| c.alpha)
            .collect();
        assert_eq!(alphas, vec![0.25, 0.5, 0.75]);
        assert_eq!(r_bar_grid(), vec![0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85]);
    }

    #[test]
    fn scale_ten_geography_a() {
        let cfg = ExperimentConfig {
            scale: 10.0,
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.resolved_geography().initial_demands(), vec![20.0, 5.0]);
        assert_eq!(cfg.resolved_service().vehicles, 1);
        let full = ExperimentConfig {
            scale: 1.0,
            ..cfg
        };
        assert_eq!(full.resolved_service().vehicles, 5);
    }

    #[test]
    fn config_text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("policy", "irl-p").unwrap();
        cfg.set("r_bar", "0.55").unwrap();
        cfg.set("priority", "1").unwrap();
        cfg.set("train.learning_rate", "0.0003").unwrap();
        let again = ExperimentConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), cfg.to_text());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_text("flet = 3").unwrap_err();
        assert!(err.to_string().contains("flet"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(262.3), "262.300");
        assert_eq!(sig6(0.0123456789), "0.0123457");
        assert_eq!(sig6(1234567.0), "1234567");
    }
}
