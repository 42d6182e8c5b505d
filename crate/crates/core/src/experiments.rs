//! Monte-Carlo harness: single-trajectory runs, phase-transition sweeps
//! over `(n, oversampling, init)`, and the artifact plumbing around them.
//!
//! Determinism contract: each trial's seed is derived from the master seed
//! and the trial's own coordinates (`n`, quantized oversampling, trial
//! index, init kind), never from grid positions or scheduling. Adding grid
//! cells therefore never perturbs existing cells, and results are merged
//! in job order, so CSV outputs are byte-identical for any worker count.

use crate::als::{
    als_run_observed, reconstruct, relative_error, GroundTruth, StopRule, Termination, Trajectory,
};
use crate::error::{Error, Result};
use crate::init::{random_orthonormal, spectral_init, InitKind, InitSpec};
use crate::plot;
use crate::sensing::{ProblemDims, SensingOperator, DEFAULT_MEMORY_BUDGET};
use crate::stream::{derive_seed, sphere_sample, Lane, StreamKey};
use ndarray::Array2;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Degrees of freedom of the target, the denominator of the oversampling
/// factor: `n1 + n2` for rank one, `r (n1 + n2 - r)` otherwise.
pub fn dof(n1: usize, n2: usize, rank: usize) -> usize {
    if rank == 1 {
        n1 + n2
    } else {
        rank * (n1 + n2 - rank)
    }
}

/// Measurement count for an oversampling factor.
pub fn measurements_for(oversampling: f64, n1: usize, n2: usize, rank: usize) -> usize {
    ((oversampling * dof(n1, n2, rank) as f64).round() as usize).max(1)
}

/// One trial of a sweep or a standalone run.
#[derive(Debug, Clone)]
pub struct TrajectoryJob {
    pub n1: usize,
    pub n2: usize,
    /// Explicit measurement count; exactly one of `m`/`oversampling`.
    pub m: Option<usize>,
    pub oversampling: Option<f64>,
    pub rank: usize,
    pub init: InitKind,
    /// Master seed of this trial; all randomness flows from it.
    pub seed: u64,
    /// Stop rule; `None` picks the budget `StopRule::default_for(n2)`.
    pub stop: Option<StopRule>,
    pub success_threshold: f64,
    pub memory_budget: u64,
}

impl TrajectoryJob {
    pub fn new(n1: usize, n2: usize, seed: u64) -> Self {
        TrajectoryJob {
            n1,
            n2,
            m: None,
            oversampling: Some(3.0),
            rank: 1,
            init: InitKind::RandomSphere,
            seed,
            stop: None,
            success_threshold: 1e-4,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn resolve_m(&self) -> Result<usize> {
        match (self.m, self.oversampling) {
            (Some(m), None) => Ok(m),
            (None, Some(os)) => {
                if !(os.is_finite() && os > 0.0) {
                    return Err(Error::InvalidParameters(format!("oversampling {os}")));
                }
                Ok(measurements_for(os, self.n1, self.n2, self.rank))
            }
            _ => Err(Error::InvalidParameters(
                "exactly one of m / oversampling must be set".into(),
            )),
        }
    }

    fn oversampling_value(&self, m: usize) -> f64 {
        self.oversampling
            .unwrap_or(m as f64 / dof(self.n1, self.n2, self.rank) as f64)
    }
}

/// Per-trial record: the `sweep` CSV schema.
#[derive(Debug, Clone)]
pub struct TrialRow {
    pub n: usize,
    pub oversampling: f64,
    pub m: usize,
    pub init: String,
    pub trial: usize,
    pub seed: u64,
    pub rel_error: f64,
    /// First iteration whose reconstruction error reached the success
    /// threshold; the total iteration count when it never did.
    pub iters: usize,
    pub status: String,
}

/// Per-cell aggregate: the `aggregate` CSV schema.
#[derive(Debug, Clone)]
pub struct CellAggregate {
    pub n: usize,
    pub oversampling: f64,
    pub m: usize,
    pub init: String,
    pub median_error: f64,
    pub success_frac: f64,
    /// Median iterations-to-threshold over successful trials (`NaN` when
    /// the cell has none).
    pub median_iters: f64,
}

/// Full sweep output: raw trial rows plus cell aggregates, both in
/// deterministic grid order.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<TrialRow>,
    pub cells: Vec<CellAggregate>,
}

impl SweepResult {
    pub fn rows_csv(&self, header_lines: &[String]) -> String {
        let mut out = csv_header(header_lines);
        out.push_str("n,oversampling,m,init,trial,seed,rel_error,iters,status\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.16e},{},{}\n",
                r.n, r.oversampling, r.m, r.init, r.trial, r.seed, r.rel_error, r.iters, r.status
            ));
        }
        out
    }

    pub fn aggregate_csv(&self, header_lines: &[String]) -> String {
        let mut out = csv_header(header_lines);
        out.push_str("n,oversampling,m,init,median_error,success_frac,median_iters\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{:.16e},{:.16e},{}\n",
                c.n, c.oversampling, c.m, c.init, c.median_error, c.success_frac, c.median_iters
            ));
        }
        out
    }
}

fn csv_header(header_lines: &[String]) -> String {
    let mut out = String::new();
    for line in header_lines {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Sweep description. The spectral-init success region is explored by
/// running a second sweep with `init` switched.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub oversampling_grid: Vec<f64>,
    pub trials: usize,
    pub init: InitKind,
    pub rank: usize,
    pub master_seed: u64,
    pub stop: Option<StopRule>,
    pub success_threshold: f64,
    pub memory_budget: u64,
}

impl ExperimentConfig {
    /// Desk-scale grid: `n` in {8, 16, 32, 64}, oversampling 1.0 to 3.0 in
    /// steps of 0.25, 50 trials per cell.
    pub fn desk_scale(master_seed: u64, init: InitKind) -> Self {
        ExperimentConfig {
            n_grid: vec![8, 16, 32, 64],
            oversampling_grid: (0..=8).map(|i| 1.0 + 0.25 * i as f64).collect(),
            trials: 50,
            init,
            rank: 1,
            master_seed,
            stop: None,
            success_threshold: 1e-4,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    /// Full grid up to `n = 256` with 100 trials per cell. Expect a long
    /// runtime.
    pub fn full_scale(master_seed: u64, init: InitKind) -> Self {
        let mut cfg = Self::desk_scale(master_seed, init);
        cfg.n_grid = vec![8, 16, 32, 64, 128, 256];
        cfg.trials = 100;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.oversampling_grid.is_empty() {
            return Err(Error::InvalidParameters("sweep grids must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameters("trials must be >= 1".into()));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::InvalidParameters("success threshold must be positive".into()));
        }
        for &n in &self.n_grid {
            if n < self.rank.max(2) || n >= (1 << 16) {
                return Err(Error::InvalidDimension(format!("grid n={n} unsupported")));
            }
            ProblemDims::new(n, n, 1, self.rank)?;
        }
        for &os in &self.oversampling_grid {
            if !(os.is_finite() && os > 0.0) {
                return Err(Error::InvalidParameters(format!("oversampling {os}")));
            }
        }
        Ok(())
    }

    /// Deterministic per-trial seed, addressed by the trial's content
    /// (`n`, quantized oversampling, trial index, init) rather than its
    /// grid position.
    pub fn trial_seed(&self, n: usize, oversampling: f64, trial: usize) -> u64 {
        let os_millis = (oversampling * 1000.0).round() as u32;
        let init_code = match self.init {
            InitKind::RandomSphere => 0,
            InitKind::Spectral => 1,
        };
        derive_seed(
            &StreamKey::new(self.master_seed, Lane::Trial)
                .trial(trial as u64)
                .matrix(os_millis)
                .entry(n as u32, init_code),
        )
    }
}

/// Completed single run with its per-trial summary row.
#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub trajectory: Trajectory,
    pub row: TrialRow,
    pub termination: Termination,
}

fn run_single(job: &TrajectoryJob) -> Result<TrajectoryRun> {
    let m = job.resolve_m()?;
    let dims = ProblemDims::new(job.n1, job.n2, m, job.rank)?;
    let op = SensingOperator::build(dims, StreamKey::new(job.seed, Lane::Measurement), job.memory_budget);

    let truth = if job.rank == 1 {
        let u = sphere_sample(&StreamKey::new(job.seed, Lane::Trial).matrix(0), job.n1)?;
        let v = sphere_sample(&StreamKey::new(job.seed, Lane::Trial).matrix(1), job.n2)?;
        GroundTruth::rank1(u, v)
    } else {
        GroundTruth {
            u: random_orthonormal(job.n1, job.rank, &StreamKey::new(job.seed, Lane::Trial).matrix(0))?,
            v: random_orthonormal(job.n2, job.rank, &StreamKey::new(job.seed, Lane::Trial).matrix(1))?,
        }
    };
    let y = op.forward_factored(&truth.u, &truth.v)?;

    let v0: Array2<f64> = match job.init {
        InitKind::RandomSphere => {
            if job.rank == 1 {
                sphere_sample(&StreamKey::new(job.seed, Lane::Init), job.n2)?
                    .insert_axis(ndarray::Axis(1))
            } else {
                random_orthonormal(job.n2, job.rank, &StreamKey::new(job.seed, Lane::Init))?
            }
        }
        InitKind::Spectral => {
            if job.rank != 1 {
                return Err(Error::InvalidParameters(
                    "spectral initialization is implemented for rank 1".into(),
                ));
            }
            let spec = InitSpec::new(InitKind::Spectral);
            let init = spectral_init(&op, &y, &spec, &StreamKey::new(job.seed, Lane::Init).matrix(1))?;
            init.v0.insert_axis(ndarray::Axis(1))
        }
    };

    let stop = job.stop.unwrap_or_else(|| StopRule::default_for(job.n2));
    let x_star = truth.x_star();
    let x_star_norm = x_star.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut iters_to_threshold: Option<usize> = None;
    let outcome = als_run_observed(&op, &y, &v0, &stop, Some(&truth), |state| {
        if iters_to_threshold.is_none() {
            let diff = reconstruct(state) - &x_star;
            let err = diff.iter().map(|x| x * x).sum::<f64>().sqrt() / x_star_norm;
            if err <= job.success_threshold {
                iters_to_threshold = Some(state.t);
            }
        }
    })?;

    let rel_error = if outcome.termination.is_failure() {
        1.0
    } else {
        relative_error(&outcome.state, &truth)
    };
    let row = TrialRow {
        n: job.n2,
        oversampling: job.oversampling_value(m),
        m,
        init: job.init.label().to_string(),
        trial: 0,
        seed: job.seed,
        rel_error,
        iters: iters_to_threshold.unwrap_or(outcome.state.t),
        status: outcome.termination.label().to_string(),
    };
    Ok(TrajectoryRun { trajectory: outcome.trajectory, row, termination: outcome.termination })
}

/// Runs one seeded trial and returns its full trajectory.
pub fn run_trajectory(job: &TrajectoryJob) -> Result<TrajectoryRun> {
    run_single(job)
}

/// Rank-r trajectory with principal-angle metrics. With `rank = 1` the
/// output coincides with [`run_trajectory`].
pub fn run_rank_r_trajectory(job: &TrajectoryJob) -> Result<TrajectoryRun> {
    run_single(job)
}

/// Executes the sweep cell by cell with trial-level parallelism. Rows come
/// back in grid order regardless of scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &n in &cfg.n_grid {
        for &os in &cfg.oversampling_grid {
            for trial in 0..cfg.trials {
                jobs.push((n, os, trial));
            }
        }
    }
    let rows: Vec<TrialRow> = jobs
        .par_iter()
        .map(|&(n, os, trial)| {
            let job = TrajectoryJob {
                n1: n,
                n2: n,
                m: None,
                oversampling: Some(os),
                rank: cfg.rank,
                init: cfg.init,
                seed: cfg.trial_seed(n, os, trial),
                stop: cfg.stop,
                success_threshold: cfg.success_threshold,
                memory_budget: cfg.memory_budget,
            };
            let mut row = run_single(&job)
                .expect("sweep jobs are validated before dispatch")
                .row;
            row.trial = trial;
            row
        })
        .collect();

    let mut cells = Vec::new();
    for &n in &cfg.n_grid {
        for &os in &cfg.oversampling_grid {
            let cell_rows: Vec<&TrialRow> = rows
                .iter()
                .filter(|r| r.n == n && r.oversampling == os)
                .collect();
            let mut errors: Vec<f64> = cell_rows.iter().map(|r| r.rel_error).collect();
            let successes: Vec<usize> = cell_rows
                .iter()
                .filter(|r| r.rel_error <= cfg.success_threshold)
                .map(|r| r.iters)
                .collect();
            let mut iters: Vec<f64> = successes.iter().map(|&x| x as f64).collect();
            cells.push(CellAggregate {
                n,
                oversampling: os,
                m: measurements_for(os, n, n, cfg.rank),
                init: cfg.init.label().to_string(),
                median_error: median(&mut errors),
                success_frac: successes.len() as f64 / cell_rows.len() as f64,
                median_iters: if iters.is_empty() { f64::NAN } else { median(&mut iters) },
            });
        }
    }
    Ok(SweepResult { rows, cells })
}

/// Median with the even-count average convention.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Plot inputs accepted by [`emit_plots`].
pub enum PlotData<'a> {
    Trajectory { trajectory: &'a Trajectory, seed: u64 },
    Sweep { result: &'a SweepResult, init: InitKind },
}

/// Renders SVG artifacts into `out_dir` (`trajectory_<seed>.svg` or
/// `sweep_<init>.svg`) and returns the written paths.
pub fn emit_plots(data: &PlotData, out_dir: &Path, header_lines: &[String]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    match data {
        PlotData::Trajectory { trajectory, seed } => {
            let svg = plot::trajectory_panels_svg(trajectory, header_lines)?;
            let path = out_dir.join(format!("trajectory_{seed}.svg"));
            std::fs::write(&path, svg)?;
            Ok(vec![path])
        }
        PlotData::Sweep { result, init } => {
            let title = format!("median reconstruction error ({})", init.label());
            let svg = plot::sweep_heatmap_svg(&result.cells, &title, header_lines)?;
            let path = out_dir.join(format!("sweep_{}.svg", init.label()));
            std::fs::write(&path, svg)?;
            Ok(vec![path])
        }
    }
}

/// Writes the trajectory CSV (`trajectory_<seed>.csv`).
pub fn emit_trajectory_csv(
    trajectory: &Trajectory,
    seed: u64,
    out_dir: &Path,
    header_lines: &[String],
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("trajectory_{seed}.csv"));
    std::fs::write(&path, trajectory.to_csv(header_lines))?;
    Ok(path)
}

/// Writes the per-trial and aggregate sweep CSVs.
pub fn emit_sweep_csvs(
    result: &SweepResult,
    init: InitKind,
    out_dir: &Path,
    header_lines: &[String],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let trials = out_dir.join(format!("sweep_{}_trials.csv", init.label()));
    std::fs::write(&trials, result.rows_csv(header_lines))?;
    let cells = out_dir.join(format!("sweep_{}_cells.csv", init.label()));
    std::fs::write(&cells, result.aggregate_csv(header_lines))?;
    Ok(vec![trials, cells])
}
