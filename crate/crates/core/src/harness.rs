//! Seeded experiments: initial data, execution with sampled observables,
//! CSV/JSON artifacts and (P, Q) sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    assess_synchronization, compute_constants, gap_unchecked, AnalysisError, DerivedConstants, SyncCriteria,
    SyncReport, Verdict,
};
use crate::grid::{energy_functional, laplacian_into, norm_l2, norm_l4, quasi_norm, Field, Grid};
use crate::integrator::{integrate, IntegrateError, IntegratorConfig};
use crate::model::{Component, ModelError, NetworkState, NeuronState, Parameters};

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = concat!("mhr-core ", env!("CARGO_PKG_VERSION"));
/// Largest network for which every pairwise gap gets its own CSV column.
pub const MAX_GAP_COLUMNS_M: usize = 16;
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SWEEP_REPORT_FILE: &str = "sweep_report.json";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl HarnessError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialMode {
    /// Independent uniform samples per cell.
    #[default]
    UniformRandom,
    /// One uniform sample per neuron and component, spread over all cells.
    ConstantOffset,
    /// A serialized `NetworkState` read from `path`.
    FromFile,
}

fn unit_box() -> [f64; 2] {
    [-1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub mode: InitialMode,
    #[serde(default = "unit_box")]
    pub u: [f64; 2],
    #[serde(default = "unit_box")]
    pub v: [f64; 2],
    #[serde(default = "unit_box")]
    pub w: [f64; 2],
    #[serde(default = "unit_box")]
    pub rho: [f64; 2],
    #[serde(default)]
    pub smoothing_passes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            mode: InitialMode::UniformRandom,
            u: unit_box(),
            v: unit_box(),
            w: unit_box(),
            rho: unit_box(),
            smoothing_passes: 0,
            path: None,
        }
    }
}

impl InitialSpec {
    pub fn amplitude(&self, c: Component) -> [f64; 2] {
        match c {
            Component::U => self.u,
            Component::V => self.v,
            Component::W => self.w,
            Component::Rho => self.rho,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        for c in Component::ALL {
            let [lo, hi] = self.amplitude(c);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(HarnessError::Spec(format!("initial.{}: box [{lo}, {hi}] must be finite with lo <= hi", c.name())));
            }
        }
        if self.mode == InitialMode::FromFile && self.path.is_none() {
            return Err(HarnessError::Spec("initial.path is required for mode = \"from-file\"".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// Per-neuron `‖u‖, ‖v‖, ‖w‖` in L² and `‖ρ‖` in L⁴.
    Norms,
    /// Energy functional weighted by C₁.
    Energy,
    /// Pairwise synchronization gaps.
    Gaps,
}

fn all_observables() -> Vec<Observable> {
    vec![Observable::Norms, Observable::Energy, Observable::Gaps]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_cstar() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    /// Interpolation constant C*(Ω) entering Qmin.
    #[serde(default = "default_cstar")]
    pub cstar: f64,
    #[serde(default = "default_fit_floor")]
    pub fit_floor: f64,
    #[serde(default = "default_transient_fraction")]
    pub transient_fraction: f64,
    #[serde(default = "default_tail_window")]
    pub tail_window: f64,
    #[serde(default = "default_sync_tolerance")]
    pub sync_tolerance: f64,
}

fn default_fit_floor() -> f64 {
    SyncCriteria::default().fit_floor
}
fn default_transient_fraction() -> f64 {
    SyncCriteria::default().transient_fraction
}
fn default_tail_window() -> f64 {
    SyncCriteria::default().tail_window
}
fn default_sync_tolerance() -> f64 {
    SyncCriteria::default().sync_tolerance
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        let c = SyncCriteria::default();
        Self {
            cstar: default_cstar(),
            fit_floor: c.fit_floor,
            transient_fraction: c.transient_fraction,
            tail_window: c.tail_window,
            sync_tolerance: c.sync_tolerance,
        }
    }
}

impl AnalysisSettings {
    pub fn criteria(&self) -> SyncCriteria {
        SyncCriteria {
            fit_floor: self.fit_floor,
            transient_fraction: self.transient_fraction,
            tail_window: self.tail_window,
            sync_tolerance: self.sync_tolerance,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(HarnessError::Spec(format!("analysis.{name} must lie in [0, 1), got {v}")))
            }
        };
        unit("transient_fraction", self.transient_fraction)?;
        if !(self.tail_window > 0.0 && self.tail_window <= 1.0) {
            return Err(HarnessError::Spec(format!("analysis.tail_window must lie in (0, 1], got {}", self.tail_window)));
        }
        for (name, v) in [("cstar", self.cstar), ("fit_floor", self.fit_floor), ("sync_tolerance", self.sync_tolerance)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarnessError::Spec(format!("analysis.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub parameters: Parameters,
    pub grid: Grid,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_observables")]
    pub observables: Vec<Observable>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

impl ExperimentSpec {
    /// The all-ones two-neuron scenario on a 128-cell unit interval.
    pub fn all_ones_default() -> Self {
        let mut parameters = Parameters::all_ones(2);
        parameters.coupling_p = 21.375;
        Self {
            parameters,
            grid: Grid::line(1.0, 128).expect("valid grid"),
            integrator: IntegratorConfig::new(crate::integrator::Scheme::ImexBe, 0.01, 60.0, 10),
            initial: InitialSpec::default(),
            seed: 1,
            observables: all_observables(),
            output_dir: default_output_dir(),
            analysis: AnalysisSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.parameters.validate()?;
        self.integrator.validate(&self.grid, &self.parameters)?;
        self.initial.validate()?;
        self.analysis.validate()?;
        if self.observables.is_empty() {
            return Err(HarnessError::Spec("observables must not be empty".into()));
        }
        Ok(())
    }

    pub fn observes(&self, o: Observable) -> bool {
        self.observables.contains(&o)
    }
}

/// One explicit diffusion step per pass, `f ← f + h²/(4n)·Δf`, which is
/// stable and never increases the H¹ seminorm.
pub fn smooth(field: &mut Field, grid: &Grid, passes: usize) {
    let nu = grid.min_spacing().powi(2) / (4.0 * grid.dim() as f64);
    let mut lap = vec![0.0; field.len()];
    for _ in 0..passes {
        laplacian_into(field.values(), grid, &mut lap);
        field.values_mut().iter_mut().zip(&lap).for_each(|(f, l)| *f += nu * l);
    }
}

fn sample_box(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Seeded initial network. Neuron `i` draws from ChaCha stream `i + 1` of
/// `seed`, so neurons are independent and adding neurons leaves earlier ones
/// unchanged.
pub fn generate_initial(spec: &ExperimentSpec, seed: u64) -> Result<NetworkState, HarnessError> {
    let grid = &spec.grid;
    let init = &spec.initial;
    let mut net = match init.mode {
        InitialMode::FromFile => {
            let path = init.path.as_deref().ok_or_else(|| HarnessError::Spec("initial.path missing".into()))?;
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let net: NetworkState =
                serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })?;
            net.validate(&spec.parameters, grid)?;
            net
        }
        mode => {
            let neurons = (0..spec.parameters.m)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64 + 1);
                    let mut s = NeuronState::zeros(grid);
                    for c in Component::ALL {
                        let bx = init.amplitude(c);
                        let f = s.component_mut(c).values_mut();
                        match mode {
                            InitialMode::ConstantOffset => f.fill(sample_box(&mut rng, bx)),
                            _ => f.iter_mut().for_each(|x| *x = sample_box(&mut rng, bx)),
                        }
                    }
                    s
                })
                .collect();
            NetworkState::new(neurons, 0.0)?
        }
    };
    for s in &mut net.neurons {
        for c in Component::ALL {
            smooth(s.component_mut(c), grid, init.smoothing_passes);
        }
    }
    Ok(net)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub spec: ExperimentSpec,
    pub derived_constants: DerivedConstants,
    pub samples: usize,
    pub final_time: f64,
    /// Blow-up diagnostics when the run diverged.
    pub divergence: Option<String>,
    #[serde(flatten)]
    pub sync: SyncReport,
}

impl ExperimentReport {
    pub fn verdict(&self) -> Verdict {
        self.sync.verdict
    }
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub timeseries: String,
    pub report: ExperimentReport,
    pub times: Vec<f64>,
    /// Gap histories in `(i, j)` order with `i < j`.
    pub gaps: Vec<((usize, usize), Vec<f64>)>,
    pub quasi_norms: Vec<f64>,
    pub final_state: NetworkState,
}

struct Recorder<'a> {
    spec: &'a ExperimentSpec,
    c1: f64,
    csv: String,
    times: Vec<f64>,
    gaps: Vec<((usize, usize), Vec<f64>)>,
    quasi_norms: Vec<f64>,
    last: Option<NetworkState>,
}

fn push_num(line: &mut String, x: f64) {
    let _ = write!(line, ",{x:.16e}");
}

impl<'a> Recorder<'a> {
    fn new(spec: &'a ExperimentSpec, c1: f64) -> Self {
        let m = spec.parameters.m;
        let gaps = (0..m).flat_map(|i| (i + 1..m).map(move |j| ((i, j), Vec::new()))).collect();
        let mut csv = String::from("t");
        if spec.observes(Observable::Norms) {
            for i in 1..=m {
                let _ = write!(csv, ",u{i}_l2,v{i}_l2,w{i}_l2,rho{i}_l4");
            }
        }
        if spec.observes(Observable::Energy) {
            csv.push_str(",energy");
        }
        if spec.observes(Observable::Gaps) {
            if m <= MAX_GAP_COLUMNS_M {
                for i in 1..=m {
                    for j in i + 1..=m {
                        let _ = write!(csv, ",gap_{i}_{j}");
                    }
                }
            } else {
                csv.push_str(",gap_max,gap_mean");
            }
        }
        csv.push('\n');
        Self { spec, c1, csv, times: Vec::new(), gaps, quasi_norms: Vec::new(), last: None }
    }

    fn observe(&mut self, t: f64, net: &NetworkState) {
        let grid = &self.spec.grid;
        let vol = grid.cell_volume();
        let mut line = format!("{t:.16e}");
        if self.spec.observes(Observable::Norms) {
            for s in &net.neurons {
                for x in [norm_l2(&s.u, grid), norm_l2(&s.v, grid), norm_l2(&s.w, grid), norm_l4(&s.rho, grid)] {
                    push_num(&mut line, x);
                }
            }
        }
        if self.spec.observes(Observable::Energy) {
            push_num(&mut line, energy_functional(net, grid, self.c1));
        }
        for ((i, j), series) in &mut self.gaps {
            series.push(gap_unchecked(net, vol, *i, *j));
        }
        if self.spec.observes(Observable::Gaps) {
            if net.m() <= MAX_GAP_COLUMNS_M {
                for (_, series) in &self.gaps {
                    push_num(&mut line, *series.last().expect("just pushed"));
                }
            } else {
                let latest: Vec<f64> = self.gaps.iter().map(|(_, s)| *s.last().expect("just pushed")).collect();
                push_num(&mut line, latest.iter().copied().fold(0.0, f64::max));
                push_num(&mut line, latest.iter().sum::<f64>() / latest.len() as f64);
            }
        }
        line.push('\n');
        self.csv.push_str(&line);
        self.times.push(t);
        self.quasi_norms.push(quasi_norm(net, grid));
    }
}

/// Runs `spec` from `net0` in memory. A blow-up is not an error: the report
/// carries verdict `diverged` and the samples recorded up to that point.
pub fn execute_from(spec: &ExperimentSpec, net0: &NetworkState) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let p = &spec.parameters;
    let dc = compute_constants(p, spec.grid.measure(), spec.analysis.cstar)?;
    let mut rec = Recorder::new(spec, dc.c1);
    rec.observe(net0.t, net0);
    let result = integrate(net0, p, &spec.grid, &spec.integrator, |t, net| {
        rec.observe(t, net);
        rec.last = Some(net.clone());
    });
    let (final_state, divergence) = match result {
        Ok(net) => (net, None),
        Err(e @ IntegrateError::BlowUp { .. }) => {
            (rec.last.take().unwrap_or_else(|| net0.clone()), Some(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let mut sync = assess_synchronization(&rec.times, &rec.gaps, &rec.quasi_norms, p, &dc, &spec.analysis.criteria());
    if divergence.is_some() {
        sync.verdict = Verdict::Diverged;
    }
    if !spec.observes(Observable::Gaps) || p.m > MAX_GAP_COLUMNS_M {
        sync.per_pair.iter_mut().for_each(|pr| pr.column = None);
    }
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.to_string(),
        spec: spec.clone(),
        derived_constants: dc,
        samples: rec.times.len(),
        final_time: rec.times.last().copied().unwrap_or(net0.t),
        divergence,
        sync,
    };
    Ok(ExperimentOutput {
        timeseries: rec.csv,
        report,
        times: rec.times,
        gaps: rec.gaps,
        quasi_norms: rec.quasi_norms,
        final_state,
    })
}

/// Generates the seeded initial state and runs `spec` in memory.
pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let net0 = generate_initial(spec, spec.seed)?;
    execute_from(spec, &net0)
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub timeseries: PathBuf,
    pub report_path: PathBuf,
    pub report: ExperimentReport,
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Runs `spec` and writes `timeseries.csv` and `report.json` into its output
/// directory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunArtifacts, HarnessError> {
    spec.validate()?;
    ensure_dir(&spec.output_dir)?;
    let out = execute(spec)?;
    let timeseries = spec.output_dir.join(TIMESERIES_FILE);
    let report_path = spec.output_dir.join(REPORT_FILE);
    write_file(&timeseries, &out.timeseries)?;
    let json = serde_json::to_string_pretty(&out.report)
        .map_err(|source| HarnessError::Json { path: report_path.clone(), source })?;
    write_file(&report_path, &(json + "\n"))?;
    Ok(RunArtifacts { timeseries, report_path, report: out.report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentSpec,
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.base.validate()?;
        for (name, values) in [("p_values", &self.p_values), ("q_values", &self.q_values)] {
            if values.is_empty() {
                return Err(HarnessError::Spec(format!("{name} must not be empty")));
            }
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(HarnessError::Spec(format!("{name} must be positive and finite")));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HarnessError::Spec(format!("{name} must be strictly increasing")));
            }
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Spec("seeds must not be empty".into()));
        }
        Ok(())
    }

    /// The experiment run for cell `(p, q)` with replicate `seed`.
    pub fn cell_spec(&self, p: f64, q: f64, seed: u64) -> ExperimentSpec {
        let mut spec = self.base.clone();
        spec.parameters.coupling_p = p;
        spec.parameters.coupling_q = q;
        spec.seed = seed;
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub fitted_rate: Option<f64>,
    pub verdict: Option<Verdict>,
    pub final_max_gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub above_threshold: bool,
    pub predicted_kappa: f64,
    pub median_rate: Option<f64>,
    pub verdict: Option<Verdict>,
    pub replicates: Vec<ReplicateResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendNote {
    #[serde(rename = "Q")]
    pub q: f64,
    /// Median rate nondecreasing in P over the cells with P > Pmin.
    pub nondecreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub sweep: SweepSpec,
    #[serde(rename = "Pmin")]
    pub p_min: f64,
    #[serde(rename = "Qmin")]
    pub q_min: f64,
    /// Row-major over `q_values`, then `p_values`.
    pub cells: Vec<SweepCell>,
    pub trend: Vec<TrendNote>,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Most frequent verdict; ties go to the least favourable one.
fn consensus(verdicts: impl Iterator<Item = Verdict>) -> Option<Verdict> {
    let order = [Verdict::Diverged, Verdict::NotSynchronized, Verdict::Synchronized, Verdict::SynchronizedTrivial];
    let mut counts = [0usize; 4];
    for v in verdicts {
        counts[order.iter().position(|&o| o == v).expect("known verdict")] += 1;
    }
    let best = *counts.iter().max()?;
    (best > 0).then(|| order[counts.iter().position(|&c| c == best).expect("max exists")])
}

fn replicate(spec: &ExperimentSpec) -> ReplicateResult {
    match execute(spec) {
        Ok(out) => ReplicateResult {
            seed: spec.seed,
            fitted_rate: out.report.sync.fitted_rate,
            verdict: Some(out.report.sync.verdict),
            final_max_gap: Some(out.report.sync.final_max_gap),
            error: None,
        },
        Err(e) => ReplicateResult { seed: spec.seed, fitted_rate: None, verdict: None, final_max_gap: None, error: Some(e.to_string()) },
    }
}

/// Runs every (P, Q, seed) combination in parallel. Failures are recorded
/// per replicate; the report does not depend on scheduling.
pub fn run_sweep(sweep: &SweepSpec) -> Result<SweepReport, HarnessError> {
    sweep.validate()?;
    let base = &sweep.base;
    let dc = compute_constants(&base.parameters, base.grid.measure(), base.analysis.cstar)?;
    let jobs: Vec<(f64, f64, u64)> = sweep
        .q_values
        .iter()
        .flat_map(|&q| sweep.p_values.iter().flat_map(move |&p| sweep.seeds.iter().map(move |&s| (p, q, s))))
        .collect();
    let results: Vec<ReplicateResult> = jobs.par_iter().map(|&(p, q, s)| replicate(&sweep.cell_spec(p, q, s))).collect();
    let cells: Vec<SweepCell> = results
        .chunks(sweep.seeds.len())
        .zip(jobs.chunks(sweep.seeds.len()))
        .map(|(reps, job)| {
            let (p, q) = (job[0].0, job[0].1);
            let xi = dc.xi_at(p, base.parameters.m);
            SweepCell {
                p,
                q,
                above_threshold: p > dc.p_min && q >= dc.q_min,
                predicted_kappa: crate::analysis::kappa_of(xi, &base.parameters),
                median_rate: median(reps.iter().filter_map(|r| r.fitted_rate).collect()),
                verdict: consensus(reps.iter().filter_map(|r| r.verdict)),
                replicates: reps.to_vec(),
            }
        })
        .collect();
    let trend = sweep
        .q_values
        .iter()
        .filter(|&&q| q >= dc.q_min)
        .map(|&q| {
            let rates: Vec<f64> =
                cells.iter().filter(|c| c.q == q && c.p > dc.p_min).filter_map(|c| c.median_rate).collect();
            TrendNote { q, nondecreasing: rates.windows(2).all(|w| w[0] <= w[1]) }
        })
        .collect();
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        artifact_version: ARTIFACT_VERSION.to_string(),
        sweep: sweep.clone(),
        p_min: dc.p_min,
        q_min: dc.q_min,
        cells,
        trend,
    })
}

/// CSV summary of a sweep: one row per cell.
pub fn sweep_summary_csv(report: &SweepReport) -> String {
    let mut csv = String::from("P,Q,above_threshold,predicted_kappa,median_rate,verdict,failures\n");
    for c in &report.cells {
        let rate = c.median_rate.map_or(String::new(), |r| format!("{r:.16e}"));
        let verdict = c.verdict.map_or(String::new(), |v| v.to_string());
        let failures = c.replicates.iter().filter(|r| r.error.is_some()).count();
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{},{:.16e},{rate},{verdict},{failures}",
            c.p, c.q, c.above_threshold, c.predicted_kappa
        );
    }
    csv
}

/// Writes `sweep_report.json` and `sweep_summary.csv` into `dir`.
pub fn write_sweep(report: &SweepReport, dir: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
    ensure_dir(dir)?;
    let json_path = dir.join(SWEEP_REPORT_FILE);
    let csv_path = dir.join(SWEEP_SUMMARY_FILE);
    let json = serde_json::to_string_pretty(report)
        .map_err(|source| HarnessError::Json { path: json_path.clone(), source })?;
    write_file(&json_path, &(json + "\n"))?;
    write_file(&csv_path, &sweep_summary_csv(report))?;
    Ok((json_path, csv_path))
}
