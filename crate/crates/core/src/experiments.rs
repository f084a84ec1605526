//! Parameter sweeps, the four figure presets, and their CSV / metadata
//! output.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Deserialize;

use crate::closed_form::{
    asymptotic_loss, bob_capacity, capacity_lower_bound_with_zeta, loss_upper_bound_heuristic,
    loss_upper_bound_theorem2_with_zeta, omega_term_detailed, theta_capacity,
};
use crate::error::{Error, Result};
use crate::montecarlo::{derive_seed, trial_rng, MCEstimate};
use crate::quantizer::{build_rvq_codebook, build_sphere_codebook, distortion_bound_eta, Codebook, DEFAULT_ZETA};
use crate::secrecy_mc::{mc_ergodic_many, CodebookPolicy, Quantity};
use crate::system_model::{derive_powers, PowerSpec, SystemConfig};

/// Smallest trial count accepted by [`ExperimentSpec::validate`].
pub const MIN_TRIALS: u64 = 100;
/// Default run seed of the figure presets.
pub const DEFAULT_SEED: u64 = 20_240_607;
/// Largest `B` for which the `auto` policy still draws a fresh codebook per trial.
pub const DEFAULT_FRESH_MAX_BITS: u32 = 10;

const RATE_UNIT: &str = "bit/s/Hz";
const CODEBOOK_STREAM: u64 = u64::MAX;

/// Parameter varied along the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    FeedbackBits,
    /// AN power `P_v`, realised through β.
    PV,
    Beta,
    /// Feedback bits per transmit antenna; `B = ⌊B̄·N_A⌋`.
    BBar,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::FeedbackBits => "feedback_bits",
            SweepVariable::PV => "p_v",
            SweepVariable::Beta => "beta",
            SweepVariable::BBar => "b_bar",
        }
    }

    fn unit(self) -> &'static str {
        match self {
            SweepVariable::FeedbackBits => "bits",
            SweepVariable::PV => "linear",
            SweepVariable::Beta => "ratio",
            SweepVariable::BBar => "bits/antenna",
        }
    }

    fn sets_bits(self) -> bool {
        matches!(self, SweepVariable::FeedbackBits | SweepVariable::BBar)
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feedback_bits" => Ok(SweepVariable::FeedbackBits),
            "p_v" => Ok(SweepVariable::PV),
            "beta" => Ok(SweepVariable::Beta),
            "b_bar" => Ok(SweepVariable::BBar),
            other => Err(Error::Parse(format!("unknown sweep variable '{other}'"))),
        }
    }
}

/// A requested result column family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Output {
    /// MC `E(ΔR_S)` with the RVQ policy.
    McLoss,
    UbTheorem2,
    /// Heuristic bound evaluated at `D = η`.
    UbHeuristic,
    /// Large-system loss with `B̄ = B / N_A`.
    Asymptote,
    CLbQ,
    CBob,
    McRsqRvq,
    McRsqSphere,
    ErsClosed,
}

impl Output {
    pub const ALL: [Output; 9] = [
        Output::McLoss,
        Output::UbTheorem2,
        Output::UbHeuristic,
        Output::Asymptote,
        Output::CLbQ,
        Output::CBob,
        Output::McRsqRvq,
        Output::McRsqSphere,
        Output::ErsClosed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Output::McLoss => "mc_loss",
            Output::UbTheorem2 => "ub_theorem2",
            Output::UbHeuristic => "ub_heuristic",
            Output::Asymptote => "asymptote",
            Output::CLbQ => "c_lb_q",
            Output::CBob => "c_bob",
            Output::McRsqRvq => "mc_rsq_rvq",
            Output::McRsqSphere => "mc_rsq_sphere",
            Output::ErsClosed => "ers_closed",
        }
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Output::McLoss | Output::McRsqRvq | Output::McRsqSphere)
    }

    /// Whether the value changes with `B`.
    pub fn depends_on_bits(self) -> bool {
        !matches!(self, Output::CBob | Output::ErsClosed)
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Output {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Output::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown output '{s}'")))
    }
}

/// How RVQ codebooks are drawn for the MC columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySpec {
    /// New codebook per channel draw.
    Fresh,
    /// One codebook per `B`, drawn from the run seed.
    Fixed,
    /// `Fresh` up to `fresh_max_bits`, `Fixed` above.
    Auto { fresh_max_bits: u32 },
}

impl PolicySpec {
    fn fresh_for(self, bits: u32) -> bool {
        match self {
            PolicySpec::Fresh => true,
            PolicySpec::Fixed => false,
            PolicySpec::Auto { fresh_max_bits } => bits <= fresh_max_bits,
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Fresh => f.write_str("fresh"),
            PolicySpec::Fixed => f.write_str("fixed"),
            PolicySpec::Auto { fresh_max_bits } => write!(f, "auto(fresh for B<={fresh_max_bits}, fixed above)"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(PolicySpec::Fresh),
            "fixed" => Ok(PolicySpec::Fixed),
            "auto" => Ok(PolicySpec::Auto {
                fresh_max_bits: DEFAULT_FRESH_MAX_BITS,
            }),
            other => Err(Error::Parse(format!("unknown codebook policy '{other}'"))),
        }
    }
}

/// A complete sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub n_a: usize,
    pub n_b: usize,
    pub n_e: usize,
    pub power: PowerSpec,
    pub beta: f64,
    pub gamma: f64,
    pub feedback_bits: u32,
    pub sweep: SweepVariable,
    pub grid: Vec<f64>,
    /// When nonempty, every `B`-dependent output gets one column per entry
    /// (suffix `_b<B>`) and the base `feedback_bits` is ignored.
    pub series_bits: Vec<u32>,
    pub trials: u64,
    pub seed: u64,
    pub policy: PolicySpec,
    pub outputs: Vec<Output>,
    pub zeta: f64,
    /// Extra `key=value` pairs copied into the metadata.
    pub notes: Vec<(String, String)>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.grid.is_empty() {
            return bad("sweep grid is empty".into());
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return bad("sweep grid contains a non-finite value".into());
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sweep grid must be strictly increasing".into());
        }
        if self.trials < MIN_TRIALS {
            return bad(format!("trials must be at least {MIN_TRIALS}, got {}", self.trials));
        }
        if self.outputs.is_empty() {
            return bad("no outputs requested".into());
        }
        let mut seen = self.outputs.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.outputs.len() {
            return bad("duplicate output requested".into());
        }
        if !self.series_bits.is_empty() {
            if self.sweep.sets_bits() {
                return bad(format!(
                    "series_bits cannot be combined with a {} sweep",
                    self.sweep.name()
                ));
            }
            let mut s = self.series_bits.clone();
            s.dedup();
            if s.len() != self.series_bits.len() || self.series_bits.windows(2).any(|w| w[1] <= w[0]) {
                return bad("series_bits must be strictly increasing".into());
            }
        }
        if self.sweep == SweepVariable::FeedbackBits
            && self
                .grid
                .iter()
                .any(|&b| b < 0.0 || b.fract() != 0.0 || b > u32::MAX as f64)
        {
            return bad("feedback_bits grid must hold nonnegative integers".into());
        }
        if self.outputs.contains(&Output::McRsqSphere) && (self.n_a, self.n_b) != (2, 1) {
            return bad("mc_rsq_sphere needs n_a = 2 and n_b = 1".into());
        }
        if self.outputs.contains(&Output::Asymptote) && (self.n_b, self.n_e) != (1, 1) {
            return bad("asymptote needs n_b = n_e = 1".into());
        }
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return bad(format!("zeta must lie in (0, 1), got {}", self.zeta));
        }
        self.base_config()?;
        Ok(())
    }

    fn base_config(&self) -> Result<SystemConfig> {
        self.power
            .resolve(self.n_a, self.n_b, self.n_e, self.beta, self.gamma, self.feedback_bits)
    }

    /// Configuration at one grid value (before any series override of `B`).
    pub fn config_at(&self, value: f64) -> Result<SystemConfig> {
        let base = self.base_config()?;
        match self.sweep {
            SweepVariable::FeedbackBits => Ok(base.with_feedback_bits(value as u32)),
            SweepVariable::BBar => {
                if value < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "b_bar must be nonnegative, got {value}"
                    )));
                }
                Ok(base.with_feedback_bits((value * self.n_a as f64 + 1e-9).floor() as u32))
            }
            SweepVariable::Beta => {
                self.power
                    .resolve(self.n_a, self.n_b, self.n_e, value, self.gamma, self.feedback_bits)
            }
            SweepVariable::PV => self.config_for_pv(value),
        }
    }

    fn config_for_pv(&self, p_v: f64) -> Result<SystemConfig> {
        let an_streams = self.n_a.saturating_sub(self.n_b) as f64;
        if an_streams == 0.0 {
            return Err(Error::InvalidConfig("p_v sweep needs n_a > n_b".into()));
        }
        if !(p_v >= 0.0) {
            return Err(Error::InvalidArgument(format!("p_v must be nonnegative, got {p_v}")));
        }
        let alpha_gamma = match self.power {
            PowerSpec::Alpha(alpha) => alpha * self.gamma,
            PowerSpec::TotalPower(p) => {
                if p_v >= p {
                    return Err(Error::InvalidArgument(format!(
                        "p_v = {p_v} leaves no power for data out of {p}"
                    )));
                }
                (p - p_v) / self.n_b as f64
            }
        };
        let beta = p_v / (alpha_gamma * an_streams);
        SystemConfig::new(
            self.n_a,
            self.n_b,
            self.n_e,
            alpha_gamma / self.gamma,
            beta,
            self.gamma,
            self.feedback_bits,
        )
    }

    fn series(&self) -> Vec<Option<u32>> {
        if self.series_bits.is_empty() {
            vec![None]
        } else {
            self.series_bits.iter().map(|&b| Some(b)).collect()
        }
    }

    /// Column headers: the sweep value first, then every requested output.
    pub fn columns(&self) -> Vec<Column> {
        let mut cols = vec![Column::new(self.sweep.name(), self.sweep.unit())];
        for &out in &self.outputs {
            let series = if out.depends_on_bits() {
                self.series()
            } else {
                vec![None]
            };
            for b in series {
                let name = match b {
                    Some(b) => format!("{}_b{b}", out.name()),
                    None => out.name().to_string(),
                };
                cols.push(Column::new(&name, RATE_UNIT));
                if out.is_monte_carlo() {
                    cols.push(Column::new(&format!("{name}_stderr"), RATE_UNIT));
                    cols.push(Column::new(&format!("{name}_clipped"), RATE_UNIT));
                    cols.push(Column::new(&format!("{name}_clipped_stderr"), RATE_UNIT));
                }
            }
        }
        cols
    }
}

/// Name and unit of one CSV column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    fn new(name: &str, unit: &str) -> Self {
        Column {
            name: name.to_string(),
            unit: unit.to_string(),
        }
    }
}

/// One grid point: the sweep value and a cell per non-sweep column.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub values: Vec<f64>,
}

/// Rows plus the metadata describing how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<ResultRow>,
    pub metadata: Vec<(String, String)>,
}

impl ExperimentResult {
    /// Index of a column among the row values (the sweep column excluded).
    pub fn value_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().skip(1).position(|c| c.name == name)
    }

    /// Every cell of a named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.value_index(name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        wr.write_record(self.columns.iter().map(|c| c.unit.as_str()))?;
        for row in &self.rows {
            let cells: Vec<String> = std::iter::once(row.sweep_value)
                .chain(row.values.iter().copied())
                .map(|v| v.to_string())
                .collect();
            wr.write_record(&cells)?;
        }
        wr.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn metadata_text(&self) -> String {
        self.metadata.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Fixed-width text table for terminals.
    pub fn summary(&self) -> String {
        let shown: Vec<usize> = (0..self.columns.len())
            .filter(|&i| i == 0 || !self.columns[i].name.contains("clipped"))
            .collect();
        let mut s = format!("{}\n", self.name);
        for &i in &shown {
            s.push_str(&format!("{:>16}", self.columns[i].name));
        }
        s.push('\n');
        for row in &self.rows {
            for &i in &shown {
                let v = if i == 0 { row.sweep_value } else { row.values[i - 1] };
                s.push_str(&format!("{v:>16.6}"));
            }
            s.push('\n');
        }
        s
    }

    /// Writes `<dir>/<stem>.csv` and `<dir>/<stem>.meta`.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let meta_path = dir.join(format!("{stem}.meta"));
        let file = fs::File::create(&csv_path).map_err(io(&csv_path))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| match e {
            Error::Csv(c) if c.is_io_error() => match c.into_kind() {
                csv::ErrorKind::Io(source) => Error::Io {
                    path: csv_path.display().to_string(),
                    source,
                },
                kind => Error::Parse(format!("{kind:?}")),
            },
            other => other,
        })?;
        fs::write(&meta_path, self.metadata_text()).map_err(io(&meta_path))?;
        Ok((csv_path, meta_path))
    }
}

struct Codebooks {
    rvq: BTreeMap<u32, Arc<Codebook>>,
    sphere: BTreeMap<u32, Arc<Codebook>>,
}

fn bits_in_use(spec: &ExperimentSpec) -> Result<Vec<u32>> {
    let mut bits: Vec<u32> = if !spec.series_bits.is_empty() {
        spec.series_bits.clone()
    } else if spec.sweep.sets_bits() {
        spec.grid
            .iter()
            .map(|&v| spec.config_at(v).map(|c| c.feedback_bits()))
            .collect::<Result<_>>()?
    } else {
        vec![spec.feedback_bits]
    };
    bits.sort_unstable();
    bits.dedup();
    Ok(bits)
}

fn prepare_codebooks(spec: &ExperimentSpec) -> Result<Codebooks> {
    let bits = bits_in_use(spec)?;
    let mut books = Codebooks {
        rvq: BTreeMap::new(),
        sphere: BTreeMap::new(),
    };
    let rvq_mc = spec
        .outputs
        .iter()
        .any(|o| matches!(o, Output::McLoss | Output::McRsqRvq));
    let stream = derive_seed(spec.seed, CODEBOOK_STREAM);
    for &b in &bits {
        if rvq_mc && !spec.policy.fresh_for(b) {
            let mut rng = trial_rng(stream, b as u64);
            let cb = build_rvq_codebook(spec.n_a, spec.n_b, b, &mut rng)?;
            books.rvq.insert(b, Arc::new(cb));
        }
        if spec.outputs.contains(&Output::McRsqSphere) {
            books.sphere.insert(b, Arc::new(build_sphere_codebook(b)?));
        }
    }
    Ok(books)
}

fn push_mc(values: &mut Vec<f64>, raw: &MCEstimate, clipped: &MCEstimate) {
    values.extend([raw.mean, raw.stderr, clipped.mean, clipped.stderr]);
}

struct PointOutcome {
    values: Vec<f64>,
    falling_factorial_zeroed: bool,
}

fn evaluate_point(spec: &ExperimentSpec, books: &Codebooks, value: f64, seed: u64) -> Result<PointOutcome> {
    let cfg = spec.config_at(value)?;
    let mut values = Vec::new();
    let mut zeroed = false;
    let mut cache: BTreeMap<(u32, Output), Vec<f64>> = BTreeMap::new();

    for b in spec.series() {
        let c = match b {
            Some(b) => cfg.with_feedback_bits(b),
            None => cfg,
        };
        let bits = c.feedback_bits();
        let mut rvq = Vec::new();
        if spec.outputs.contains(&Output::McLoss) {
            rvq.extend([Quantity::RateLoss, Quantity::RateLossClipped]);
        }
        if spec.outputs.contains(&Output::McRsqRvq) {
            rvq.extend([Quantity::RateQuantized, Quantity::RateQuantizedClipped]);
        }
        if !rvq.is_empty() {
            let policy = match books.rvq.get(&bits) {
                Some(cb) => CodebookPolicy::Fixed(Arc::clone(cb)),
                None => CodebookPolicy::FreshPerTrial,
            };
            let est = mc_ergodic_many(&c, &rvq, spec.trials, seed, &policy)?;
            let mut it = est.chunks(2);
            for out in [Output::McLoss, Output::McRsqRvq] {
                if spec.outputs.contains(&out) {
                    let pair = it.next().expect("one estimate pair per output");
                    let mut v = Vec::new();
                    push_mc(&mut v, &pair[0], &pair[1]);
                    cache.insert((bits, out), v);
                }
            }
        }
        if let Some(cb) = books.sphere.get(&bits) {
            let q = [Quantity::RateQuantized, Quantity::RateQuantizedClipped];
            let est = mc_ergodic_many(&c, &q, spec.trials, seed, &CodebookPolicy::Fixed(Arc::clone(cb)))?;
            let mut v = Vec::new();
            push_mc(&mut v, &est[0], &est[1]);
            cache.insert((bits, Output::McRsqSphere), v);
        }
        for &out in &spec.outputs {
            let v = match out {
                Output::UbTheorem2 => loss_upper_bound_theorem2_with_zeta(&c, spec.zeta)?,
                Output::UbHeuristic => {
                    let d = distortion_bound_eta(c.n_a(), c.n_b(), c.codebook_size(), spec.zeta)?;
                    loss_upper_bound_heuristic(&c, d)?
                }
                Output::Asymptote => {
                    let p = derive_powers(&c).p_total;
                    asymptotic_loss(p, c.beta(), bits as f64 / c.n_a() as f64)?
                }
                Output::CLbQ => capacity_lower_bound_with_zeta(&c, spec.zeta)?,
                Output::CBob => bob_capacity(&c)?,
                Output::ErsClosed => {
                    let om = omega_term_detailed(&c)?;
                    zeroed |= om.falling_factorial_zeroed;
                    theta_capacity(c.n_b(), c.n_a(), c.alpha() * c.gamma())? - om.value
                }
                _ => continue,
            };
            cache.insert((bits, out), vec![v]);
        }
    }

    for &out in &spec.outputs {
        let series = if out.depends_on_bits() {
            spec.series()
        } else {
            vec![None]
        };
        for b in series {
            let bits = b.unwrap_or(cfg.feedback_bits());
            let key = if out.depends_on_bits() {
                (bits, out)
            } else {
                *cache.keys().find(|k| k.1 == out).expect("value computed")
            };
            values.extend_from_slice(&cache[&key]);
        }
    }
    Ok(PointOutcome {
        values,
        falling_factorial_zeroed: zeroed,
    })
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn metadata(spec: &ExperimentSpec, zeroed: &[f64]) -> Result<Vec<(String, String)>> {
    let mut m: Vec<(String, String)> = vec![
        ("name".into(), spec.name.clone()),
        ("library_version".into(), env!("CARGO_PKG_VERSION").into()),
        ("seed".into(), spec.seed.to_string()),
        ("trials".into(), spec.trials.to_string()),
        ("zeta".into(), spec.zeta.to_string()),
        ("codebook_policy".into(), spec.policy.to_string()),
        ("fixed_codebook_seed".into(), "derived from run seed and B".into()),
        ("point_seed".into(), "derived from run seed and grid index".into()),
        (
            "negative_rate_convention".into(),
            "headline columns average raw rates; *_clipped columns average max(rate,0)".into(),
        ),
        ("log_base".into(), "2".into()),
        (
            "rvq_expectation".into(),
            "over channel and codebook when fresh; over channel only when fixed".into(),
        ),
        ("heuristic_distortion".into(), "eta".into()),
        ("n_a".into(), spec.n_a.to_string()),
        ("n_b".into(), spec.n_b.to_string()),
        ("n_e".into(), spec.n_e.to_string()),
    ];
    match spec.power {
        PowerSpec::Alpha(a) => m.push(("alpha".into(), a.to_string())),
        PowerSpec::TotalPower(p) => m.push(("p_total".into(), p.to_string())),
    }
    m.push(("beta".into(), spec.beta.to_string()));
    m.push(("gamma".into(), spec.gamma.to_string()));
    if !spec.sweep.sets_bits() && spec.series_bits.is_empty() {
        m.push(("feedback_bits".into(), spec.feedback_bits.to_string()));
    }
    m.push(("sweep".into(), spec.sweep.name().into()));
    m.push(("grid".into(), join(&spec.grid)));
    if !spec.series_bits.is_empty() {
        m.push(("series_feedback_bits".into(), join(&spec.series_bits)));
    }
    m.push(("outputs".into(), join(spec.outputs.iter().map(|o| o.name()))));
    let ff = if !spec.outputs.contains(&Output::ErsClosed) {
        "not_evaluated".to_string()
    } else if zeroed.is_empty() {
        "none".to_string()
    } else {
        format!("zeroed at {}", join(zeroed))
    };
    m.push(("falling_factorial_negative_order".into(), ff));
    m.extend(spec.notes.iter().cloned());
    Ok(m)
}

/// Evaluates every grid point (concurrently) and assembles the rows in grid
/// order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let books = prepare_codebooks(spec)?;
    let outcomes: Vec<PointOutcome> = spec
        .grid
        .par_iter()
        .enumerate()
        .map(|(index, &value)| {
            log::info!("{}: grid point {index} ({} = {value})", spec.name, spec.sweep.name());
            evaluate_point(spec, &books, value, derive_seed(spec.seed, index as u64)).map_err(|e| Error::GridPoint {
                index,
                value,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let zeroed: Vec<f64> = spec
        .grid
        .iter()
        .zip(&outcomes)
        .filter(|(_, o)| o.falling_factorial_zeroed)
        .map(|(&v, _)| v)
        .collect();
    let rows = spec
        .grid
        .iter()
        .zip(outcomes)
        .map(|(&sweep_value, o)| ResultRow {
            sweep_value,
            values: o.values,
        })
        .collect();
    Ok(ExperimentResult {
        name: spec.name.clone(),
        columns: spec.columns(),
        rows,
        metadata: metadata(spec, &zeroed)?,
    })
}

/// The four paper figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl FigureId {
    pub const ALL: [FigureId; 4] = [FigureId::Fig1, FigureId::Fig2, FigureId::Fig3, FigureId::Fig4];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown figure '{s}' (expected fig1..fig4)")))
    }
}

/// Preset knobs that may be overridden.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetOverrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    /// Eve's antenna count for fig1.
    pub n_e: Option<usize>,
    /// `B` values of fig3.
    pub series_bits: Option<Vec<u32>>,
    pub grid: Option<Vec<f64>>,
    pub policy: Option<PolicySpec>,
}

fn range(lo: u32, hi: u32, step: u32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}

/// The sweep behind one figure, with overrides applied.
pub fn figure_spec(id: FigureId, ov: &PresetOverrides) -> ExperimentSpec {
    let mut notes = Vec::new();
    let mut spec = match id {
        FigureId::Fig1 => {
            let n_e = ov.n_e.unwrap_or(2);
            let src = if ov.n_e.is_some() { "override" } else { "default" };
            notes.push(("n_e_source".into(), src.into()));
            ExperimentSpec {
                name: "fig1".into(),
                n_a: 4,
                n_b: 2,
                n_e,
                power: PowerSpec::Alpha(1.0),
                beta: 1.0,
                gamma: 1.0,
                feedback_bits: 0,
                sweep: SweepVariable::FeedbackBits,
                grid: range(2, 16, 2),
                series_bits: Vec::new(),
                trials: 100_000,
                seed: DEFAULT_SEED,
                policy: PolicySpec::Auto {
                    fresh_max_bits: DEFAULT_FRESH_MAX_BITS,
                },
                outputs: vec![Output::McLoss, Output::UbTheorem2, Output::UbHeuristic],
                zeta: DEFAULT_ZETA,
                notes: Vec::new(),
            }
        }
        FigureId::Fig2 => ExperimentSpec {
            name: "fig2".into(),
            n_a: 10,
            n_b: 1,
            n_e: 1,
            power: PowerSpec::TotalPower(1.0),
            beta: 1.0,
            gamma: 1.0,
            feedback_bits: 0,
            sweep: SweepVariable::FeedbackBits,
            grid: range(2, 10, 1),
            series_bits: Vec::new(),
            trials: 100_000,
            seed: DEFAULT_SEED,
            policy: PolicySpec::Auto {
                fresh_max_bits: DEFAULT_FRESH_MAX_BITS,
            },
            outputs: vec![Output::McLoss, Output::Asymptote],
            zeta: DEFAULT_ZETA,
            notes: Vec::new(),
        },
        FigureId::Fig3 => {
            let bits = ov.series_bits.clone().unwrap_or_else(|| vec![6, 10, 20]);
            let src = if ov.series_bits.is_some() {
                "override"
            } else {
                "default"
            };
            notes.push(("series_feedback_bits_source".into(), src.into()));
            ExperimentSpec {
                name: "fig3".into(),
                n_a: 4,
                n_b: 2,
                n_e: 2,
                power: PowerSpec::Alpha(1.0),
                beta: 1.0,
                gamma: 1.0,
                feedback_bits: 0,
                sweep: SweepVariable::PV,
                // β ∈ {1, 2, 4, …, 64}
                grid: (0..7).map(|k| 2.0 * f64::from(1u32 << k)).collect(),
                series_bits: bits,
                trials: 1000,
                seed: DEFAULT_SEED,
                policy: PolicySpec::Auto {
                    fresh_max_bits: DEFAULT_FRESH_MAX_BITS,
                },
                outputs: vec![Output::CLbQ, Output::CBob, Output::McRsqRvq],
                zeta: DEFAULT_ZETA,
                notes: Vec::new(),
            }
        }
        FigureId::Fig4 => ExperimentSpec {
            name: "fig4".into(),
            n_a: 2,
            n_b: 1,
            n_e: 1,
            power: PowerSpec::TotalPower(10.0),
            beta: 2.0,
            gamma: 1.0,
            feedback_bits: 0,
            sweep: SweepVariable::FeedbackBits,
            grid: range(1, 12, 1),
            series_bits: Vec::new(),
            trials: 100_000,
            seed: DEFAULT_SEED,
            policy: PolicySpec::Auto {
                fresh_max_bits: DEFAULT_FRESH_MAX_BITS,
            },
            outputs: vec![Output::McRsqRvq, Output::McRsqSphere],
            zeta: DEFAULT_ZETA,
            notes: Vec::new(),
        },
    };
    if let Some(seed) = ov.seed {
        spec.seed = seed;
    }
    if let Some(t) = ov.trials {
        spec.trials = t;
    }
    if let Some(g) = &ov.grid {
        spec.grid = g.clone();
    }
    if let Some(p) = ov.policy {
        spec.policy = p;
    }
    notes.push(("preset".into(), id.name().into()));
    spec.notes = notes;
    spec
}

/// Runs a preset and writes `<out>/<id>.csv` and `<out>/<id>.meta`.
pub fn run_figure_preset(
    id: FigureId,
    ov: &PresetOverrides,
    out: &Path,
) -> Result<(ExperimentResult, PathBuf, PathBuf)> {
    let result = run_experiment(&figure_spec(id, ov))?;
    let (csv, meta) = result.write_files(out, id.name())?;
    Ok((result, csv, meta))
}

/// On-disk sweep description (TOML):
///
/// ```text
/// name = "beta_sweep"
/// n_a = 4
/// n_b = 2
/// n_e = 2
/// alpha = 1.0            # or: p_total = 4.0
/// beta = 1.0
/// gamma = 1.0
/// feedback_bits = 8
/// sweep = "beta"         # feedback_bits | p_v | beta | b_bar
/// grid = [1.0, 2.0, 4.0]
/// series_bits = [6, 10]  # optional
/// trials = 1000
/// seed = 7
/// codebook_policy = "auto"   # auto | fresh | fixed
/// fresh_max_bits = 10        # optional, auto only
/// outputs = ["mc_loss", "ub_theorem2"]
/// zeta = 0.5                 # optional
/// ```
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    name: Option<String>,
    n_a: usize,
    n_b: usize,
    n_e: usize,
    alpha: Option<f64>,
    p_total: Option<f64>,
    beta: f64,
    gamma: f64,
    #[serde(default)]
    feedback_bits: u32,
    sweep: String,
    grid: Vec<f64>,
    #[serde(default)]
    series_bits: Vec<u32>,
    trials: u64,
    seed: u64,
    #[serde(default = "default_policy")]
    codebook_policy: String,
    fresh_max_bits: Option<u32>,
    outputs: Vec<String>,
    zeta: Option<f64>,
}

fn default_policy() -> String {
    "auto".into()
}

impl ExperimentSpec {
    /// Parses and validates a TOML sweep file.
    pub fn parse_toml(text: &str) -> Result<Self> {
        let f: ExperimentFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let power = match (f.alpha, f.p_total) {
            (Some(a), None) => PowerSpec::Alpha(a),
            (None, Some(p)) => PowerSpec::TotalPower(p),
            _ => {
                return Err(Error::Parse(
                    "exactly one of `alpha` and `p_total` must be given".into(),
                ))
            }
        };
        let mut policy: PolicySpec = f.codebook_policy.parse()?;
        if let Some(m) = f.fresh_max_bits {
            match policy {
                PolicySpec::Auto { .. } => policy = PolicySpec::Auto { fresh_max_bits: m },
                _ => return Err(Error::Parse("fresh_max_bits only applies to the auto policy".into())),
            }
        }
        let spec = ExperimentSpec {
            name: f.name.unwrap_or_else(|| "sweep".into()),
            n_a: f.n_a,
            n_b: f.n_b,
            n_e: f.n_e,
            power,
            beta: f.beta,
            gamma: f.gamma,
            feedback_bits: f.feedback_bits,
            sweep: f.sweep.parse()?,
            grid: f.grid,
            series_bits: f.series_bits,
            trials: f.trials,
            seed: f.seed,
            policy,
            outputs: f.outputs.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            zeta: f.zeta.unwrap_or(DEFAULT_ZETA),
            notes: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_toml(&text)
    }
}
