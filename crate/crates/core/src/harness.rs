//! Experiment configuration, seeded replication and reports.
//!
//! A run is fully determined by its [`ExperimentConfig`]: replicate `i`
//! draws its noise from `derive_seed(master_seed, [i])`, results are
//! collected in replicate order, and every verdict records the tolerance and
//! sample size it was judged with.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::growth::{evolve_interface, rescale_field, GrowthFunction, InitialProfile, Pairing};
use crate::kernels::{delta_power_sums, heat_kernel, local_time_bound_chain, subsample_grid};
use crate::noise::{derive_seed, ModelParams, NoiseField, NoiseSpec};
use crate::polymer::{
    bound_scan_sample, compute_c, compute_v, delta_comparison, evolve_partition, evolve_partition_window,
    renorm_y_sample, KField, YField,
};
use crate::she::{robin_semigroup, she_euler_sample, EulerGrid};
use crate::stats::{ks_two_sample, summarize};

/// `sqrt(2 / pi)`: the walk's expected local time at the origin grows like
/// this times `sqrt(t)`, which sets the rate in the lower constant
/// `0.5 exp(-|A| rate sqrt(b))` of the local-time scan.
pub const LOCAL_TIME_RATE: f64 = 0.797_884_560_802_865_4;

/// Largest number of lattice cell updates a run may request.
pub const DEFAULT_MAX_CELLS: f64 = 6e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Invariance,
    LocalTimeScan,
    RenormMean,
    BoundScan,
    SheCompare,
    Kernels,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Invariance => "invariance",
            ExperimentKind::LocalTimeScan => "local_time_scan",
            ExperimentKind::RenormMean => "renorm_mean",
            ExperimentKind::BoundScan => "bound_scan",
            ExperimentKind::SheCompare => "she_compare",
            ExperimentKind::Kernels => "kernels",
        }
    }
}

/// Noise law plus the master seed of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSection {
    pub fn new(spec: NoiseSpec, seed: u64) -> Self {
        NoiseSection {
            family: spec.family_name().to_string(),
            parameter: spec.parameter(),
            seed,
        }
    }

    pub fn spec(&self) -> Result<NoiseSpec> {
        NoiseSpec::from_name(&self.family, self.parameter)
    }
}

/// A point `(x, t)` in rescaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub x: f64,
    pub t: f64,
}

/// Explicit Euler grid for the SHE comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheSection {
    pub dx: f64,
    pub dt: f64,
    pub length: f64,
}

impl Default for SheSection {
    fn default() -> Self {
        SheSection {
            dx: 0.05,
            dt: 0.00125,
            length: 8.0,
        }
    }
}

/// Lattice window of single-realization field dumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSection {
    pub x_max: u64,
    pub t_max: u64,
    pub stride: u64,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            x_max: 64,
            t_max: 256,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelParams,
    pub noise: NoiseSection,
    /// `"quadratic"` or `"polymer"`.
    #[serde(default = "default_psi")]
    pub psi: String,
    /// Curvature of the quadratic rule; derived from `pairing` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_parameter: Option<f64>,
    #[serde(default = "default_pairing")]
    pub pairing: Pairing,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub points: Vec<EvalPoint>,
    #[serde(default)]
    pub profile: InitialProfile,
    /// Renormalization window exponent or bound-scan exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Significance level of two-sample tests.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Extra relative slack added to mean comparisons.
    #[serde(default)]
    pub relative_tolerance: f64,
    /// Required fraction of bound-scan runs inside both envelopes.
    #[serde(default = "default_pass_fraction")]
    pub min_pass_fraction: f64,
    /// Horizon of the kernel sums behind `V`.
    #[serde(default = "default_truncation")]
    pub truncation: u64,
    /// Subsample count per axis of the local-time grid.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Drive both invariance models with the same noise stream.
    #[serde(default)]
    pub coupled: bool,
    #[serde(default)]
    pub she: SheSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default = "default_max_cells")]
    pub max_cells: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_psi() -> String {
    "quadratic".into()
}
fn default_pairing() -> Pairing {
    Pairing::EffectiveCurvature
}
fn default_replicates() -> usize {
    500
}
fn default_alpha() -> f64 {
    0.01
}
fn default_pass_fraction() -> f64 {
    0.95
}
fn default_truncation() -> u64 {
    256
}
fn default_grid_points() -> usize {
    12
}
fn default_max_cells() -> f64 {
    DEFAULT_MAX_CELLS
}

impl ExperimentConfig {
    /// Desk-scale defaults: `N = 4096`, `beta = 1`, `A = 0`, 500 replicates
    /// and points `(0.25, 0.25), (0.5, 0.5), (1.0, 0.5)`.
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            model: ModelParams::new(4096, 1.0, 0.0).expect("valid defaults"),
            noise: NoiseSection::new(NoiseSpec::Rademacher, 0),
            psi: default_psi(),
            psi_parameter: None,
            pairing: default_pairing(),
            replicates: default_replicates(),
            points: vec![
                EvalPoint { x: 0.25, t: 0.25 },
                EvalPoint { x: 0.5, t: 0.5 },
                EvalPoint { x: 1.0, t: 0.5 },
            ],
            profile: InitialProfile::Flat,
            epsilon: None,
            alpha: default_alpha(),
            relative_tolerance: 0.0,
            min_pass_fraction: default_pass_fraction(),
            truncation: default_truncation(),
            grid_points: default_grid_points(),
            coupled: false,
            she: SheSection::default(),
            field: FieldSection::default(),
            max_cells: DEFAULT_MAX_CELLS,
            output_dir: None,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.noise.seed
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        self.noise.spec()
    }

    pub fn growth(&self) -> Result<GrowthFunction> {
        let beta = self.model.beta();
        match self.psi.as_str() {
            "polymer" => GrowthFunction::polymer(beta),
            "quadratic" => {
                GrowthFunction::quadratic(self.psi_parameter.unwrap_or(self.pairing.curvature_for(beta)))
            }
            other => Err(LabError::Config(format!("unknown psi '{other}'"))),
        }
    }

    /// `epsilon`, or the kind's default (0.05 for the renormalization
    /// window, 0.2 for bound scans).
    pub fn epsilon_or_default(&self) -> f64 {
        self.epsilon.unwrap_or(match self.kind {
            ExperimentKind::BoundScan => 0.2,
            _ => 0.05,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.noise.seed > i64::MAX as u64 {
            return bad(format!("seed {} does not fit in 63 bits", self.noise.seed));
        }
        self.noise_spec().map_err(|e| LabError::Config(e.to_string()))?;
        self.growth().map_err(|e| LabError::Config(e.to_string()))?;
        self.profile.validate().map_err(|e| LabError::Config(e.to_string()))?;
        let (a, b) = (self.model.a(), self.model.b());
        for p in &self.points {
            if !(p.x > 0.0 && p.x <= a && p.t >= 0.0 && p.t <= b) {
                return bad(format!("point ({}, {}) is outside (0, {a}] x [0, {b}]", p.x, p.t));
            }
        }
        let eps = self.epsilon_or_default();
        if !(eps > 0.0 && eps < 0.25) {
            return bad(format!("epsilon must lie in (0, 1/4), got {eps}"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.relative_tolerance >= 0.0 && self.relative_tolerance.is_finite()) {
            return bad("relative_tolerance must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.min_pass_fraction) {
            return bad("min_pass_fraction must lie in [0, 1]".into());
        }
        if self.truncation < 16 {
            return bad("truncation must be >= 16".into());
        }
        if self.grid_points < 2 {
            return bad("grid_points must be >= 2".into());
        }
        if self.field.stride == 0 {
            return bad("field.stride must be >= 1".into());
        }
        if !(self.max_cells > 0.0) {
            return bad("max_cells must be positive".into());
        }
        if self.kind == ExperimentKind::SheCompare {
            let g = self.euler_grid(0.0)?;
            g.validate().map_err(|e| LabError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Parses TOML or JSON; the format is sniffed from the first character.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| LabError::Config(format!("JSON: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| LabError::Config(format!("TOML: {e}")))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(format!("TOML: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| LabError::Config(format!("JSON: {e}")))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self).map_err(|e| LabError::Config(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    fn euler_grid(&self, horizon: f64) -> Result<EulerGrid> {
        Ok(EulerGrid {
            a: self.model.boundary(),
            beta: self.model.beta(),
            mu2: self.noise_spec()?.moment(2)?,
            dx: self.she.dx,
            dt: self.she.dt,
            length: self.she.length,
            horizon,
        })
    }

    /// Nearest lattice site and time of a rescaled point.
    fn lattice(&self, p: EvalPoint) -> (u64, u64) {
        let x = (p.x * self.model.sqrt_n()).round() as u64;
        let t = (p.t * self.model.n() as f64).round() as u64;
        (x, t)
    }

    /// Smallest stored window covering every point after bilinear
    /// interpolation.
    fn lattice_extent(&self) -> (u64, u64) {
        let ceil = |v: f64| (v - 1e-9).ceil().max(0.0) as u64;
        let x = self.points.iter().map(|p| ceil(p.x * self.model.sqrt_n())).max().unwrap_or(0);
        let t = self.points.iter().map(|p| ceil(p.t * self.model.n() as f64)).max().unwrap_or(0);
        (x, t)
    }
}

/// A named numeric table; rows follow `columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// UTF-8, LF line endings, header row first.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| LabError::Config(format!("CSV: {e}"));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_number(*v))).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Config(format!("CSV: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
    }
}

/// Integers print without a fractional part; everything else uses the
/// shortest representation that round-trips.
fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Above,
}

impl Relation {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::AtMost => value <= threshold,
            Relation::AtLeast => value >= threshold,
            Relation::Above => value > threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Above => ">",
        }
    }
}

/// `value relation threshold`, judged on `sample_size` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub sample_size: usize,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        relation: Relation,
        threshold: f64,
        sample_size: usize,
        detail: impl Into<String>,
    ) -> Self {
        Verdict {
            name: name.into(),
            value,
            relation,
            threshold,
            sample_size,
            passed: relation.holds(value, threshold),
            detail: detail.into(),
        }
    }

    /// Re-derives `passed` from the stored numbers.
    pub fn recheck(&self) -> bool {
        self.relation.holds(self.value, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub verdicts: Vec<Verdict>,
    /// The first table is the primary one.
    pub tables: Vec<Table>,
    /// Replicates dropped because a field became non-finite.
    pub excluded_replicates: usize,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(ExperimentReport {
            provenance: Provenance {
                kind: cfg.kind,
                config_hash: cfg.hash()?,
                master_seed: cfg.master_seed(),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config: cfg.clone(),
            verdicts: Vec::new(),
            tables: Vec::new(),
            excluded_replicates: 0,
            notes: Vec::new(),
        })
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut report = ExperimentReport::new(cfg)?;
    match cfg.kind {
        ExperimentKind::Invariance => run_invariance(cfg, &mut report)?,
        ExperimentKind::LocalTimeScan => run_local_time_scan(cfg, &mut report)?,
        ExperimentKind::RenormMean => run_renorm_mean(cfg, &mut report)?,
        ExperimentKind::BoundScan => run_bound_scan(cfg, &mut report)?,
        ExperimentKind::SheCompare => run_she_compare(cfg, &mut report)?,
        ExperimentKind::Kernels => run_kernels(cfg, &mut report)?,
    }
    Ok(report)
}

fn check_budget(cfg: &ExperimentConfig, cells_per_replicate: f64) -> Result<()> {
    let total = cells_per_replicate * cfg.replicates as f64;
    if total > cfg.max_cells {
        return Err(LabError::Refused(format!(
            "{} needs about {total:.3e} cell updates ({cells_per_replicate:.3e} per replicate, {} replicates; \
             about {:.0} s at 10 ns per cell), above the limit {:.3e}",
            cfg.kind.name(),
            cfg.replicates,
            total * 1e-8,
            cfg.max_cells
        )));
    }
    Ok(())
}

/// Cells touched by a shrinking-slab evolution to `horizon` at `x_eval`.
fn cone_cells(x_eval: u64, horizon: u64) -> f64 {
    let (x, t) = (x_eval as f64, horizon as f64);
    (t + 1.0) * (x + 1.0 + 0.5 * t)
}

/// Runs `f` on every replicate seed in parallel and collects results in
/// replicate order; non-finite failures are dropped and counted.
fn replicate<T: Send>(
    cfg: &ExperimentConfig,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<(Vec<(usize, T)>, usize)> {
    let master = cfg.master_seed();
    let results: Vec<Result<T>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| f(i, derive_seed(master, &[i as u64])))
        .collect();
    let mut kept = Vec::with_capacity(results.len());
    let mut excluded = 0;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => kept.push((i, v)),
            Err(LabError::NonFinite(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((kept, excluded))
}

fn point_label(p: EvalPoint) -> String {
    format!("({}, {})", p.x, p.t)
}

fn run_invariance(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let spec = cfg.noise_spec()?;
    let growth = cfg.growth()?;
    let params = cfg.model;
    // The polymer is the reference model and needs no renormalization.
    let v = match growth {
        GrowthFunction::Polymer { .. } => 0.0,
        _ => compute_v(&spec, &growth, cfg.truncation)?.v,
    };
    let (x_eval, horizon) = cfg.lattice_extent();
    check_budget(cfg, 2.0 * cone_cells(x_eval, horizon))?;
    let (samples, excluded) = replicate(cfg, |_, seed| {
        let model_noise = NoiseField::new(spec, derive_seed(seed, &[0]));
        let polymer_noise = NoiseField::new(spec, derive_seed(seed, &[if cfg.coupled { 0 } else { 1 }]));
        let f = evolve_interface(&growth, &model_noise, &params, &cfg.profile, horizon, x_eval, None)?;
        let z = evolve_partition_window(&polymer_noise, &params, &cfg.profile, horizon, x_eval)?;
        let rf = rescale_field(&f, v);
        cfg.points
            .iter()
            .map(|p| Ok((rf.exp_beta(p.x, p.t)?, z.rescaled_exp_beta(p.x, p.t)?)))
            .collect::<Result<Vec<_>>>()
    })?;
    report.excluded_replicates = excluded;
    report.notes.push(format!("psi = {}, V = {v}", growth.name()));

    let mut points = Table::new(
        "points",
        &["x", "t", "n", "model_mean", "model_se", "polymer_mean", "polymer_se", "D", "p"],
    );
    let mut dump = Table::new("samples", &["replicate", "x", "t", "model", "polymer"]);
    for (j, p) in cfg.points.iter().enumerate() {
        let a: Vec<f64> = samples.iter().map(|(_, s)| s[j].0).collect();
        let b: Vec<f64> = samples.iter().map(|(_, s)| s[j].1).collect();
        for (i, s) in &samples {
            dump.push(vec![*i as f64, p.x, p.t, s[j].0, s[j].1]);
        }
        if a.is_empty() {
            report.verdicts.push(Verdict::new(
                format!("ks {}", point_label(*p)),
                0.0,
                Relation::Above,
                cfg.alpha,
                0,
                "no finite replicates",
            ));
            continue;
        }
        let ks = ks_two_sample(&a, &b)?;
        let (sa, sb) = (summarize(&a, 1.96)?, summarize(&b, 1.96)?);
        points.push(vec![p.x, p.t, a.len() as f64, sa.mean, sa.std_error, sb.mean, sb.std_error, ks.d, ks.p]);
        report.verdicts.push(Verdict::new(
            format!("ks {}", point_label(*p)),
            ks.p,
            Relation::Above,
            cfg.alpha,
            a.len(),
            format!("two-sample KS p-value, D = {:.4}", ks.d),
        ));
    }
    report.tables.push(points);
    report.tables.push(dump);
    Ok(())
}

fn run_local_time_scan(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let p = cfg.model;
    let xs = subsample_grid(p.x_window(), cfg.grid_points);
    let ts = subsample_grid(p.t_window(), cfg.grid_points);
    let rows = local_time_bound_chain(p.n(), p.boundary(), &xs, &ts)?;
    let c1 = 0.5 * (-p.boundary().abs() * LOCAL_TIME_RATE * p.b().sqrt()).exp();
    let mut table = Table::new("bound_chain", &["N", "A", "x", "t", "dp_value", "jensen_lb", "cs_ub"]);
    let (mut jensen_gap, mut cs_gap) = (f64::INFINITY, f64::INFINITY);
    let (mut min_value, mut min_jensen, mut max_value, mut max_cs) = (f64::INFINITY, f64::INFINITY, 0.0f64, 0.0f64);
    for r in &rows {
        table.push(vec![r.n as f64, r.boundary, r.x as f64, r.t as f64, r.dp_value, r.jensen_lb, r.cs_ub]);
        jensen_gap = jensen_gap.min(r.dp_value / r.jensen_lb);
        cs_gap = cs_gap.min(2.0 * r.cs_ub / r.dp_value);
        min_value = min_value.min(r.dp_value);
        min_jensen = min_jensen.min(r.jensen_lb);
        max_value = max_value.max(r.dp_value);
        max_cs = max_cs.max(r.cs_ub);
    }
    let n = rows.len();
    // Both bounds are exact inequalities; allow only rounding.
    let slack = 1.0 - 1e-12;
    report.verdicts.push(Verdict::new(
        "jensen lower bound",
        jensen_gap,
        Relation::AtLeast,
        slack,
        n,
        "min over the grid of value / gamma^E[d]",
    ));
    report.verdicts.push(Verdict::new(
        "upper constant",
        cs_gap,
        Relation::AtLeast,
        slack,
        n,
        "min over the grid of 2 * (Cauchy-Schwarz product) / value",
    ));
    report.verdicts.push(Verdict::new(
        "lower constant",
        min_value.min(min_jensen),
        Relation::AtLeast,
        c1,
        n,
        format!("min of value and Jensen bound against 0.5 exp(-|A| {LOCAL_TIME_RATE:.4} sqrt(b))"),
    ));
    report.notes.push(format!(
        "value range [{min_value:.6}, {max_value:.6}], C1 = {c1:.6}, C2 = {:.6}",
        2.0 * max_cs
    ));
    report.tables.push(table);
    Ok(())
}

fn run_renorm_mean(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let spec = cfg.noise_spec()?;
    let growth = cfg.growth()?;
    let params = cfg.model;
    let eps = cfg.epsilon_or_default();
    let c = compute_c(&growth)?;
    let vr = compute_v(&spec, &growth, cfg.truncation)?;
    let lattice: Vec<(u64, u64)> = cfg.points.iter().map(|p| cfg.lattice(*p)).collect();
    let cells: f64 = lattice.iter().map(|&(x, t)| cone_cells(x, t)).sum();
    check_budget(cfg, cells)?;
    let (samples, excluded) = replicate(cfg, |_, seed| {
        let noise = NoiseField::new(spec, seed);
        lattice
            .iter()
            .map(|&(x, t)| renorm_y_sample(&noise, &params, eps, c, x, t))
            .collect::<Result<Vec<_>>>()
    })?;
    report.excluded_replicates = excluded;
    report.notes.push(format!(
        "c = {c}, V = {}, truncation = {}, tail_bound = {:e}",
        vr.v, vr.truncation, vr.tail_bound
    ));

    let mut points = Table::new("points", &["x", "t", "n", "mean", "se", "target", "deviation", "tolerance"]);
    let mut dump = Table::new("samples", &["replicate", "x", "t", "Y"]);
    for (j, p) in cfg.points.iter().enumerate() {
        let ys: Vec<f64> = samples.iter().map(|(_, s)| s[j]).collect();
        for (i, s) in &samples {
            dump.push(vec![*i as f64, p.x, p.t, s[j]]);
        }
        let target = vr.v * p.t;
        let (dev, tol, n) = match summarize(&ys, 3.0) {
            Ok(s) => {
                let tol = 3.0 * s.std_error + cfg.relative_tolerance * target.abs();
                points.push(vec![p.x, p.t, s.n as f64, s.mean, s.std_error, target, s.mean - target, tol]);
                ((s.mean - target).abs(), tol, s.n)
            }
            Err(_) => (f64::INFINITY, 0.0, 0),
        };
        report.verdicts.push(Verdict::new(
            format!("mean Y {}", point_label(*p)),
            dev,
            Relation::AtMost,
            tol,
            n,
            format!("|mean Y - V t| against 3 SE + {} |V t|", cfg.relative_tolerance),
        ));
    }
    report.tables.push(points);
    report.tables.push(dump);
    let mut vt = Table::new("v_report", &["c", "V", "V_truncated", "truncation", "tail_bound"]);
    vt.push(vec![vr.c, vr.v, vr.v_truncated, vr.truncation as f64, vr.tail_bound]);
    report.tables.push(vt);
    Ok(())
}

fn run_bound_scan(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let spec = cfg.noise_spec()?;
    let params = cfg.model;
    let eps = cfg.epsilon_or_default();
    check_budget(cfg, cone_cells(params.x_window() + 1, params.t_window()))?;
    let (runs, excluded) = replicate(cfg, |_, seed| {
        bound_scan_sample(&NoiseField::new(spec, seed), &params, &cfg.profile, eps)
    })?;
    report.excluded_replicates = excluded;
    let mut table = Table::new("runs", &["replicate", "min_z", "max_gradient", "lower_ok", "upper_ok"]);
    let mut ok = 0;
    for (i, r) in &runs {
        table.push(vec![
            *i as f64,
            r.min_z,
            r.max_gradient,
            r.lower_ok as u8 as f64,
            r.upper_ok as u8 as f64,
        ]);
        ok += (r.lower_ok && r.upper_ok) as usize;
    }
    // Excluded runs count as violations.
    let fraction = ok as f64 / cfg.replicates as f64;
    if let Some((_, r)) = runs.first() {
        report.notes.push(format!(
            "thresholds: min Z >= {:.6}, max gradient <= {:.6}",
            r.lower_threshold, r.upper_threshold
        ));
    }
    report.verdicts.push(Verdict::new(
        "runs inside both envelopes",
        fraction,
        Relation::AtLeast,
        cfg.min_pass_fraction,
        cfg.replicates,
        format!("{ok} of {} runs with epsilon = {eps}", cfg.replicates),
    ));
    report.tables.push(table);
    Ok(())
}

fn run_she_compare(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let spec = cfg.noise_spec()?;
    let params = cfg.model;
    let t_max = cfg.points.iter().map(|p| p.t).fold(0.0, f64::max);
    let grid = cfg.euler_grid(t_max)?;
    grid.validate()?;
    let n = params.n();
    let sqrt_n = params.sqrt_n();
    let profile = cfg.profile.clone();
    let initial = move |x: f64| profile.value((x * sqrt_n).round() as u64, n);
    let steps: Vec<usize> = cfg.points.iter().map(|p| (p.t / grid.dt).round() as usize).collect();
    let every = steps.iter().filter(|&&s| s > 0).fold(0, |g, &s| gcd(g, s));
    let (x_eval, horizon) = cfg.lattice_extent();
    check_budget(cfg, cone_cells(x_eval, horizon) + (grid.cells() * grid.steps()) as f64)?;

    let (samples, excluded) = replicate(cfg, |_, seed| {
        let she = she_euler_sample(&grid, &initial, (every > 0).then_some(every), derive_seed(seed, &[0]))?;
        let z = evolve_partition_window(
            &NoiseField::new(spec, derive_seed(seed, &[1])),
            &params,
            &cfg.profile,
            horizon,
            x_eval,
        )?;
        cfg.points
            .iter()
            .zip(&steps)
            .map(|(p, &s)| {
                let (_, row) = she
                    .snapshots
                    .iter()
                    .find(|(t, _)| ((t / grid.dt).round() as usize) == s)
                    .ok_or_else(|| LabError::Range(format!("no SHE snapshot at t = {}", p.t)))?;
                let pos = p.x / grid.dx;
                let i = (pos.floor() as usize).min(row.len() - 2);
                let f = pos - i as f64;
                let zs = (1.0 - f) * row[i] + f * row[i + 1];
                Ok((zs, z.rescaled_exp_beta(p.x, p.t)?, she.negative_cells))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    report.excluded_replicates = excluded;
    let negative: usize = samples.iter().map(|(_, s)| s.first().map_or(0, |v| v.2)).sum();
    report.notes.push(format!(
        "grid dx = {}, dt = {}, length = {}; {negative} negative cell updates flagged",
        grid.dx, grid.dt, grid.length
    ));

    let mut points = Table::new(
        "points",
        &["x", "t", "n", "she_mean", "she_var", "she_se", "semigroup", "polymer_mean", "D", "p"],
    );
    let mut dump = Table::new("samples", &["replicate", "x", "t", "Z_sample", "polymer"]);
    for (j, p) in cfg.points.iter().enumerate() {
        let a: Vec<f64> = samples.iter().map(|(_, s)| s[j].0).collect();
        let b: Vec<f64> = samples.iter().map(|(_, s)| s[j].1).collect();
        for (i, s) in &samples {
            dump.push(vec![*i as f64, p.x, p.t, s[j].0, s[j].1]);
        }
        let target = if p.t > 0.0 {
            robin_semigroup(grid.a, &initial, p.x, p.t)?
        } else {
            initial(p.x)
        };
        let (sa, sb) = (summarize(&a, 3.0)?, summarize(&b, 3.0)?);
        let ks = ks_two_sample(&a, &b)?;
        points.push(vec![
            p.x, p.t, sa.n as f64, sa.mean, sa.variance, sa.std_error, target, sb.mean, ks.d, ks.p,
        ]);
        let tol = 3.0 * sa.std_error + cfg.relative_tolerance * target.abs();
        report.verdicts.push(Verdict::new(
            format!("she mean {}", point_label(*p)),
            (sa.mean - target).abs(),
            Relation::AtMost,
            tol,
            sa.n,
            format!("|mean Z - P_t z0| against 3 SE + {} |P_t z0|", cfg.relative_tolerance),
        ));
        report.verdicts.push(Verdict::new(
            format!("ks {}", point_label(*p)),
            ks.p,
            Relation::Above,
            cfg.alpha,
            sa.n,
            format!("SHE vs polymer one-point law, D = {:.4}", ks.d),
        ));
    }
    report.tables.push(points);
    report.tables.push(dump);
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn run_kernels(cfg: &ExperimentConfig, report: &mut ExperimentReport) -> Result<()> {
    let spec = cfg.noise_spec()?;
    let growth = cfg.growth()?;
    let t_max = cfg.truncation;
    let s2 = delta_power_sums(2, t_max)?;
    let s4 = delta_power_sums(4, t_max)?;
    let mut table = Table::new("power_sums", &["t", "S2", "S4", "S2*t^1.5"]);
    for t in 0..=t_max as usize {
        table.push(vec![t as f64, s2[t], s4[t], s2[t] * (t as f64).powf(1.5)]);
    }
    report.tables.push(table);

    let v1 = compute_v(&spec, &growth, t_max)?;
    let v2 = compute_v(&spec, &growth, 2 * t_max)?;
    report.verdicts.push(Verdict::new(
        "V truncation",
        (v1.v_truncated - v2.v_truncated).abs(),
        Relation::AtMost,
        v1.tail_bound,
        1,
        format!("|V({t_max}) - V({})| against the tail bound at {t_max}", 2 * t_max),
    ));
    let mass_err = (0..=t_max)
        .map(|t| {
            let t = t as i64;
            let m: f64 = (-t..=t).map(|x| heat_kernel(x, t as u64)).sum();
            (m - 1.0).abs()
        })
        .fold(0.0, f64::max);
    report.verdicts.push(Verdict::new(
        "heat kernel mass",
        mass_err,
        Relation::AtMost,
        1e-12,
        t_max as usize + 1,
        "max_t |sum_x p(x, t) - 1|",
    ));
    let mut vt = Table::new("v_report", &["c", "V", "V_truncated", "truncation", "tail_bound"]);
    for r in [v1, v2] {
        vt.push(vec![r.c, r.v, r.v_truncated, r.truncation as f64, r.tail_bound]);
    }
    report.tables.push(vt);
    Ok(())
}

/// Single-realization field dumps for replicate 0 of a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// `(x, t, f_raw, f_tilted)` of the configured growth rule.
    Interface,
    /// `(x, t, Z, f_poly)`.
    Polymer,
    /// `(x, t, K, Y, delta)` with every field on the same noise.
    Renorm,
}

pub fn field_dump(cfg: &ExperimentConfig, kind: FieldKind) -> Result<Table> {
    cfg.validate()?;
    let spec = cfg.noise_spec()?;
    let params = cfg.model;
    let x_max = cfg.field.x_max.min(params.x_window());
    let t_max = cfg.field.t_max.min(params.t_window());
    let stride = cfg.field.stride;
    let budget = cone_cells(x_max, t_max) * if kind == FieldKind::Renorm { 4.0 } else { 1.0 };
    if budget > cfg.max_cells {
        return Err(LabError::Refused(format!("field dump needs about {budget:.3e} cells")));
    }
    let noise = NoiseField::new(spec, derive_seed(derive_seed(cfg.master_seed(), &[0]), &[0]));
    let times = (0..=t_max).step_by(stride as usize);
    match kind {
        FieldKind::Interface => {
            let growth = cfg.growth()?;
            let f = evolve_interface(&growth, &noise, &params, &cfg.profile, t_max, x_max, None)?;
            let mut table = Table::new("field", &["x", "t", "f_raw", "f_tilted"]);
            for t in times {
                for x in 0..=x_max {
                    table.push(vec![x as f64, t as f64, f.raw(x, t)?, f.tilted(x, t)?]);
                }
            }
            Ok(table)
        }
        FieldKind::Polymer => {
            let z = evolve_partition_window(&noise, &params, &cfg.profile, t_max, x_max)?;
            let mut table = Table::new("field", &["x", "t", "Z", "f_poly"]);
            for t in times {
                for x in 0..=x_max as i64 {
                    table.push(vec![x as f64, t as f64, z.z(x, t)?, z.f_poly(x, t)?]);
                }
            }
            Ok(table)
        }
        FieldKind::Renorm => {
            let growth = cfg.growth()?;
            let eps = cfg.epsilon_or_default();
            let f = evolve_interface(&growth, &noise, &params, &cfg.profile, t_max, x_max, None)?;
            let z = evolve_partition(&noise, &params, &cfg.profile, t_max, x_max, None)?;
            let k = KField::compute(&noise, &params, eps, t_max, x_max)?;
            let y = YField::from_k(&k, compute_c(&growth)?);
            let cmp = delta_comparison(&f, &z, &k, &y)?;
            let mut table = Table::new("field", &["x", "t", "K", "Y", "delta"]);
            for &(x, t, kv, yv, d) in &cmp.rows {
                if t % stride == 0 {
                    table.push(vec![x as f64, t as f64, kv, yv, d]);
                }
            }
            Ok(table)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(LabError::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// CSV: the primary table. JSON: the whole report. Text: provenance, notes
/// and the verdict table.
pub fn summarize_report(report: &ExperimentReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => match report.tables.first() {
            Some(t) => t.to_csv(),
            None => Ok(String::new()),
        },
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|e| LabError::Config(format!("JSON: {e}")))
        }
        ReportFormat::Text => {
            let p = &report.provenance;
            let mut out = String::new();
            let _ = writeln!(out, "experiment  {}", p.kind.name());
            let _ = writeln!(out, "config      sha256:{}", p.config_hash);
            let _ = writeln!(out, "seed        {}", p.master_seed);
            let _ = writeln!(out, "version     {}", p.version);
            if report.excluded_replicates > 0 {
                let _ = writeln!(out, "excluded    {} non-finite replicates", report.excluded_replicates);
            }
            for note in &report.notes {
                let _ = writeln!(out, "note        {note}");
            }
            let _ = writeln!(out);
            let width = report.verdicts.iter().map(|v| v.name.len()).max().unwrap_or(7).max(7);
            let _ = writeln!(out, "{:<width$}  {:>14} {:>2} {:>14} {:>7}  result", "verdict", "value", "", "threshold", "n");
            for v in &report.verdicts {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>14.6e} {:>2} {:>14.6e} {:>7}  {}  {}",
                    v.name,
                    v.value,
                    v.relation.symbol(),
                    v.threshold,
                    v.sample_size,
                    if v.passed { "PASS" } else { "FAIL" },
                    v.detail
                );
            }
            let _ = writeln!(out, "overall: {}", if report.passed() { "PASS" } else { "FAIL" });
            Ok(out)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| LabError::io(path, e))
}

/// Writes `report.json`, `summary.txt` and one `<table>.csv` per table into
/// `dir`, creating it if needed. Returns the written paths.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut written = Vec::new();
    let json = dir.join("report.json");
    write_file(&json, &summarize_report(report, ReportFormat::Json)?)?;
    written.push(json);
    let text = dir.join("summary.txt");
    write_file(&text, &summarize_report(report, ReportFormat::Text)?)?;
    written.push(text);
    for table in &report.tables {
        let path = dir.join(format!("{}.csv", table.name));
        write_file(&path, &table.to_csv()?)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    write_file(path, &table.to_csv()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.model = ModelParams::new(64, 1.0, 0.5).unwrap();
        cfg.replicates = 40;
        cfg.noise.seed = 11;
        cfg.points = vec![EvalPoint { x: 0.5, t: 0.25 }, EvalPoint { x: 1.0, t: 0.5 }];
        cfg
    }

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.psi_parameter = Some(0.1 + 0.2);
        cfg.profile = InitialProfile::HolderSine { clip: 2.5 };
        cfg.output_dir = Some("out/run".into());
        let toml = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&toml).unwrap(), cfg);
        let json = cfg.to_json().unwrap();
        assert_eq!(ExperimentConfig::parse(&json).unwrap(), cfg);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let cfg = ExperimentConfig::parse(
            r#"
            kind = "bound_scan"
            [model]
            N = 256
            beta = 1.0
            A = 0.0
            [noise]
            family = "gaussian"
            parameter = 1.0
            seed = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.replicates, 500);
        assert_eq!(cfg.epsilon_or_default(), 0.2);
        assert_eq!(cfg.pairing, Pairing::EffectiveCurvature);
        assert_eq!(cfg.noise_spec().unwrap(), NoiseSpec::Gaussian { sigma: 1.0 });
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.replicates = 0;
        assert!(matches!(cfg.validate(), Err(LabError::Config(_))));
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.points.push(EvalPoint { x: 0.0, t: 0.5 });
        assert!(cfg.validate().is_err());
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.points.push(EvalPoint { x: 0.5, t: 1.5 });
        assert!(cfg.validate().is_err());
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.psi = "cubic".into();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::parse("kind = \"nope\"").is_err());
        assert!(ExperimentConfig::parse("{\"kind\": \"kernels\"}").is_err());
        let mut cfg = small(ExperimentKind::SheCompare);
        cfg.she.dt = 0.01;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn oversized_runs_are_refused_with_an_estimate() {
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.max_cells = 1e3;
        match run_experiment(&cfg) {
            Err(LabError::Refused(msg)) => assert!(msg.contains("cell updates")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coupled_polymer_against_polymer_agrees_samplewise() {
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.psi = "polymer".into();
        cfg.coupled = true;
        let r = run_experiment(&cfg).unwrap();
        let s = r.table("samples").unwrap();
        assert_eq!(s.rows.len(), cfg.points.len() * cfg.replicates);
        for row in &s.rows {
            assert!((row[3] - row[4]).abs() <= 1e-10 * row[4].abs(), "{row:?}");
        }
        assert!(r.passed());
    }

    #[test]
    fn reports_are_reproducible_and_order_free() {
        let cfg = small(ExperimentKind::Invariance);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(summarize_report(&a, ReportFormat::Csv).unwrap(), summarize_report(&b, ReportFormat::Csv).unwrap());
        assert_eq!(a.table("samples").unwrap().to_csv().unwrap(), b.table("samples").unwrap().to_csv().unwrap());
        // Replicate i only depends on (master_seed, i).
        let mut shorter = cfg.clone();
        shorter.replicates = 10;
        let c = run_experiment(&shorter).unwrap();
        let head: Vec<_> = a.table("samples").unwrap().rows.iter().filter(|r| r[0] < 10.0).cloned().collect();
        assert_eq!(c.table("samples").unwrap().rows, head);
    }

    #[test]
    fn json_round_trip_is_identity_and_verdicts_recheck() {
        let r = run_experiment(&small(ExperimentKind::RenormMean)).unwrap();
        let json = summarize_report(&r, ReportFormat::Json).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.verdicts.iter().all(|v| v.recheck() == v.passed && v.sample_size > 0));
    }

    #[test]
    fn empty_point_set_gives_header_only_csv() {
        let mut cfg = small(ExperimentKind::Invariance);
        cfg.points.clear();
        let r = run_experiment(&cfg).unwrap();
        let csv = summarize_report(&r, ReportFormat::Csv).unwrap();
        assert_eq!(csv, "x,t,n,model_mean,model_se,polymer_mean,polymer_se,D,p\n");
    }

    #[test]
    fn local_time_scan_passes_at_small_n() {
        let mut cfg = small(ExperimentKind::LocalTimeScan);
        cfg.model = ModelParams::new(100, 1.0, 1.0).unwrap();
        let r = run_experiment(&cfg).unwrap();
        assert!(r.passed(), "{}", summarize_report(&r, ReportFormat::Text).unwrap());
        assert_eq!(r.tables[0].rows.len(), 11 * 12);
    }

    #[test]
    fn kernels_and_she_runs() {
        let mut cfg = small(ExperimentKind::Kernels);
        cfg.truncation = 64;
        let r = run_experiment(&cfg).unwrap();
        assert!(r.passed(), "{}", summarize_report(&r, ReportFormat::Text).unwrap());
        assert_eq!(r.tables[0].columns, ["t", "S2", "S4", "S2*t^1.5"]);

        let mut cfg = small(ExperimentKind::SheCompare);
        cfg.she = SheSection { dx: 0.1, dt: 0.005, length: 6.0 };
        let r = run_experiment(&cfg).unwrap();
        let pts = r.table("points").unwrap();
        assert_eq!(pts.rows.len(), 2);
        assert!(r.verdict("she mean (0.5, 0.25)").unwrap().passed);
    }

    #[test]
    fn bound_scan_and_field_dumps() {
        let mut cfg = small(ExperimentKind::BoundScan);
        cfg.replicates = 5;
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.tables[0].rows.len(), 5);
        cfg.field = FieldSection { x_max: 4, t_max: 10, stride: 5 };
        let f = field_dump(&cfg, FieldKind::Interface).unwrap();
        assert_eq!(f.rows.len(), 5 * 3);
        let z = field_dump(&cfg, FieldKind::Polymer).unwrap();
        assert_eq!(z.columns, ["x", "t", "Z", "f_poly"]);
        let d = field_dump(&cfg, FieldKind::Renorm).unwrap();
        assert_eq!(d.columns, ["x", "t", "K", "Y", "delta"]);
        assert_eq!(d.rows.len(), 5 * 3);
    }

    #[test]
    fn write_failures_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let r = run_experiment(&{
            let mut c = small(ExperimentKind::Kernels);
            c.truncation = 16;
            c
        })
        .unwrap();
        match write_report(&r, &blocker.join("sub")) {
            Err(LabError::Io { path, .. }) => assert!(path.starts_with(&blocker)),
            other => panic!("{other:?}"),
        }
        let written = write_report(&r, &dir.path().join("out")).unwrap();
        assert_eq!(written.len(), 2 + r.tables.len());
        let text = fs::read_to_string(&written[1]).unwrap();
        assert!(text.contains("overall: PASS"));
    }
}
