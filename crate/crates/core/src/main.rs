//! Experiment CLI: seeded trajectory runs, phase-transition sweeps,
//! rank-r runs, coupled-sequence diagnostics, and restricted-isometry
//! estimation, each emitting self-describing CSV/SVG artifacts.

use als_sensing::als::{StopRule, Termination};
use als_sensing::diagnostics::{
    check_normal_equation, check_perp_decrease, checks_to_csv, coupled_run, estimate_rip,
    CheckRecord, DiagConfig, FactorSide,
};
use als_sensing::error::Error;
use als_sensing::experiments::{
    emit_plots, emit_sweep_csvs, emit_trajectory_csv, run_rank_r_trajectory, run_sweep,
    run_trajectory, ExperimentConfig, PlotData, TrajectoryJob,
};
use als_sensing::init::InitKind;
use als_sensing::sensing::{
    AuxiliaryOperator, ProblemDims, SensingOperator, DEFAULT_MEMORY_BUDGET,
};
use als_sensing::stream::{sphere_sample, Lane, StreamKey};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "als-sensing", version, about = "Low-rank matrix sensing by alternating least squares")]
struct Cli {
    /// Worker threads for trial-level parallelism (default: all cores).
    /// Results are byte-identical for any value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Spectral,
}

impl From<InitArg> for InitKind {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Random => InitKind::RandomSphere,
            InitArg::Spectral => InitKind::Spectral,
        }
    }
}

#[derive(Args)]
struct SizeArgs {
    /// Rows of the target matrix.
    #[arg(long, default_value_t = 64)]
    n1: usize,
    /// Columns of the target matrix.
    #[arg(long, default_value_t = 64)]
    n2: usize,
    /// Measurement count (mutually exclusive with --oversampling).
    #[arg(long, conflicts_with = "oversampling")]
    m: Option<usize>,
    /// Measurements per degree of freedom of the target (default 3 when
    /// --m is absent).
    #[arg(long)]
    oversampling: Option<f64>,
}

impl SizeArgs {
    fn into_job(&self, rank: usize, init: InitKind, seed: u64, common: &CommonArgs) -> TrajectoryJob {
        let mut job = TrajectoryJob::new(self.n1, self.n2, seed);
        job.rank = rank;
        job.init = init;
        job.memory_budget = common.memory_budget;
        job.success_threshold = common.success_threshold;
        match (self.m, self.oversampling) {
            (Some(m), _) => {
                job.m = Some(m);
                job.oversampling = None;
            }
            (None, Some(os)) => job.oversampling = Some(os),
            (None, None) => job.oversampling = Some(3.0),
        }
        job.stop = Some(common.stop_rule(self.n2));
        job
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Master seed; every random value in the run derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iteration budget (default: a multiple of the expected two-phase
    /// iteration count for n2).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative-residual stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Angle stopping tolerance (0 disables; needs known ground truth).
    #[arg(long, default_value_t = 0.0)]
    angle_tol: f64,
    /// Output directory for CSV/SVG artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Phase-2 boundary constant: phase 2 starts once
    /// cos theta_v >= phase_c / ln(n2).
    #[arg(long, default_value_t = 1.0)]
    phase_c: f64,
    /// Relative-error threshold below which a trial counts as a success.
    #[arg(long, default_value_t = 1e-4)]
    success_threshold: f64,
    /// Dense-storage budget in bytes; larger operators stream entries.
    #[arg(long, default_value_t = DEFAULT_MEMORY_BUDGET)]
    memory_budget: u64,
}

impl CommonArgs {
    fn stop_rule(&self, n2: usize) -> StopRule {
        let mut stop = StopRule::default_for(n2);
        if let Some(it) = self.max_iters {
            stop.max_iters = it.max(1);
        }
        stop.residual_tol = self.tol;
        stop.angle_tol = self.angle_tol;
        stop
    }
}

#[derive(Subcommand)]
enum Command {
    /// One seeded rank-1 run; emits the trajectory CSV and plots.
    Run {
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long, value_enum, default_value_t = InitArg::Random)]
        init: InitArg,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte-Carlo phase-transition sweep over (n, oversampling).
    Sweep {
        /// Comma-separated n values (n1 = n2 = n).
        #[arg(long, default_value = "8,16,32,64")]
        n_grid: String,
        /// Comma-separated factors or start:end:step.
        #[arg(long, default_value = "1.0:3.0:0.25")]
        oversampling_grid: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = InitArg::Random)]
        init: InitArg,
        /// Paper-scale grid (n up to 256, 100 trials); takes hours.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// One seeded rank-r run with principal-angle metrics.
    RankR {
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, value_enum, default_value_t = InitArg::Random)]
        init: InitArg,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Coupled primary/auxiliary run in the canonical frame
    /// (u* = v* = e1), with closeness and concentration checks.
    Diagnose {
        #[command(flatten)]
        size: SizeArgs,
        /// Check horizon T.
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        /// Union-bound weight; must exceed 1.
        #[arg(long, default_value_t = 32.0)]
        eta: f64,
        /// Samples for the restricted-isometry estimate.
        #[arg(long, default_value_t = 200)]
        rip_samples: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sampled restricted-isometry estimate for one operator.
    Rip {
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Evaluate the canonical split-operator margins too.
        #[arg(long)]
        canonical: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn header_lines(common: &CommonArgs, extra: &[String]) -> Vec<String> {
    let invocation: Vec<String> = std::env::args().collect();
    let mut lines = vec![
        format!("als-sensing {}", als_sensing::VERSION),
        format!("invocation: {}", invocation.join(" ")),
        format!("master_seed: {}", common.seed),
    ];
    lines.extend_from_slice(extra);
    lines
}

fn parse_grid_usize(s: &str) -> Result<Vec<usize>, Error> {
    let vals: Result<Vec<usize>, _> = s.split(',').map(|x| x.trim().parse::<usize>()).collect();
    vals.map_err(|_| Error::InvalidParameters(format!("--n-grid: cannot parse '{s}'")))
}

fn parse_grid_f64(s: &str) -> Result<Vec<f64>, Error> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameters(format!(
                "--oversampling-grid: expected start:end:step, got '{s}'"
            )));
        }
        let nums: Result<Vec<f64>, _> = parts.iter().map(|x| x.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|_| {
            Error::InvalidParameters(format!("--oversampling-grid: cannot parse '{s}'"))
        })?;
        let (start, end, step) = (nums[0], nums[1], nums[2]);
        if step <= 0.0 || end < start {
            return Err(Error::InvalidParameters(
                "--oversampling-grid: need end >= start and step > 0".into(),
            ));
        }
        let mut grid = Vec::new();
        let mut i = 0usize;
        loop {
            let v = start + step * i as f64;
            if v > end + 1e-9 {
                break;
            }
            grid.push(v);
            i += 1;
        }
        Ok(grid)
    } else {
        let vals: Result<Vec<f64>, _> = s.split(',').map(|x| x.trim().parse::<f64>()).collect();
        vals.map_err(|_| Error::InvalidParameters(format!("--oversampling-grid: cannot parse '{s}'")))
    }
}

/// Exit 1: bad configuration. Exit 2: the solver failed on a valid
/// configuration (partial artifacts are already flushed).
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::IllConditionedSubproblem { .. }
        | Error::DegenerateIterate { .. }
        | Error::DegenerateObservation => 2,
        _ => 1,
    }
}

fn cmd_run_like(
    size: &SizeArgs,
    rank: usize,
    init: InitKind,
    common: &CommonArgs,
    rank_r_path: bool,
) -> Result<u8, Error> {
    let job = size.into_job(rank, init, common.seed, common);
    let mut run = if rank_r_path { run_rank_r_trajectory(&job)? } else { run_trajectory(&job)? };
    run.trajectory.relabel_phases(common.phase_c, size.n2);
    let header = header_lines(
        common,
        &[
            format!("init: {}", init.label()),
            format!("n1: {} n2: {} m: {} rank: {}", size.n1, size.n2, run.row.m, rank),
            format!("phase_c: {}", common.phase_c),
        ],
    );
    let csv = emit_trajectory_csv(&run.trajectory, common.seed, &common.out_dir, &header)?;
    let svg = emit_plots(
        &PlotData::Trajectory { trajectory: &run.trajectory, seed: common.seed },
        &common.out_dir,
        &header,
    )?;
    println!(
        "{} rel_error={:.3e} iters={} status={}",
        run.row.init, run.row.rel_error, run.row.iters, run.row.status
    );
    println!("wrote {}", csv.display());
    for p in svg {
        println!("wrote {}", p.display());
    }
    Ok(if run.termination.is_failure() { 2 } else { 0 })
}

fn cmd_sweep(
    n_grid: &str,
    os_grid: &str,
    trials: usize,
    init: InitKind,
    full: bool,
    rank: usize,
    common: &CommonArgs,
) -> Result<u8, Error> {
    let mut cfg = if full {
        eprintln!("warning: --full runs the paper-scale grid; expect a long runtime");
        ExperimentConfig::full_scale(common.seed, init)
    } else {
        let mut cfg = ExperimentConfig::desk_scale(common.seed, init);
        cfg.n_grid = parse_grid_usize(n_grid)?;
        cfg.oversampling_grid = parse_grid_f64(os_grid)?;
        cfg.trials = trials;
        cfg
    };
    cfg.rank = rank;
    cfg.success_threshold = common.success_threshold;
    cfg.memory_budget = common.memory_budget;
    if common.max_iters.is_some() {
        // Explicit cap from the caller; otherwise every n picks its own
        // default budget.
        cfg.stop = Some(common.stop_rule(*cfg.n_grid.iter().max().unwrap()));
    }
    let result = run_sweep(&cfg)?;
    let header = header_lines(
        common,
        &[
            format!("init: {}", init.label()),
            format!("trials_per_cell: {}", cfg.trials),
            format!("success_threshold: {:e}", cfg.success_threshold),
        ],
    );
    for p in emit_sweep_csvs(&result, init, &common.out_dir, &header)? {
        println!("wrote {}", p.display());
    }
    for p in emit_plots(&PlotData::Sweep { result: &result, init }, &common.out_dir, &header)? {
        println!("wrote {}", p.display());
    }
    let failures = result.rows.iter().filter(|r| r.status.starts_with("failed")).count();
    println!("{} trials, {} solver failures", result.rows.len(), failures);
    Ok(0)
}

fn cmd_diagnose(
    size: &SizeArgs,
    horizon: usize,
    eta: f64,
    rip_samples: usize,
    common: &CommonArgs,
) -> Result<u8, Error> {
    let job = size.into_job(1, InitKind::RandomSphere, common.seed, common);
    let m = job.resolve_m()?;
    let dims = ProblemDims::new(size.n1, size.n2, m, 1)?;
    let op = SensingOperator::build(dims, StreamKey::new(common.seed, Lane::Measurement), common.memory_budget)
        .into_canonical();
    let aux = AuxiliaryOperator::build(&op, StreamKey::new(common.seed, Lane::AuxResample))?;
    let v0 = sphere_sample(&StreamKey::new(common.seed, Lane::Init), size.n2)?;
    let stop = common.stop_rule(size.n2);
    let coupling = coupled_run(&op, &aux, v0.view(), &stop)?;

    let mut cfg = DiagConfig::new(horizon, eta)?;
    cfg.rip_samples = rip_samples.max(1);
    let rip = estimate_rip(&op, cfg.rip_samples, &StreamKey::new(common.seed, Lane::Trial).matrix(1000))?;

    let mut rows: Vec<CheckRecord> = Vec::new();
    rows.push(CheckRecord {
        t: 0,
        name: "rip_delta_hat".into(),
        lhs: rip.estimate.delta_hat,
        rhs: 1.0,
        satisfied: rip.estimate.delta_hat < 1.0,
    });
    rows.extend(rip.split_checks.iter().cloned());
    for rec in &coupling.records {
        rows.push(CheckRecord {
            t: rec.t,
            name: match rec.side {
                FactorSide::U => "closeness_u".into(),
                FactorSide::V => "closeness_v".into(),
            },
            lhs: rec.d_par.max(rec.d_perp),
            rhs: rec.bound,
            satisfied: rec.satisfied,
        });
    }
    let truth = {
        let mut e1u = ndarray::Array1::zeros(size.n1);
        e1u[0] = 1.0;
        let mut e1v = ndarray::Array1::zeros(size.n2);
        e1v[0] = 1.0;
        als_sensing::als::GroundTruth::rank1(e1u, e1v)
    };
    for cs in coupling.states.iter().take(horizon) {
        let disc = check_normal_equation(&op, &cs.primary, &truth)?;
        rows.push(CheckRecord {
            t: cs.t,
            name: "normal_equation_discrepancy".into(),
            lhs: disc,
            rhs: 1e-8,
            satisfied: disc <= 1e-8,
        });
        if rip.estimate.delta_hat < 1.0 {
            let perp = check_perp_decrease(
                cs.primary.v_prev.column(0),
                cs.primary.u_half.column(0),
                &truth,
                rip.estimate.delta_hat,
            )?;
            for mut row in perp {
                row.t = cs.t;
                rows.push(row);
            }
        }
    }
    match als_sensing::diagnostics::check_concentration_bounds(&op, &aux, &coupling, &cfg) {
        Ok(conc) => rows.extend(conc),
        Err(Error::NotSupportedInStreamedMode) => {
            eprintln!("note: operator is streamed; skipping entrywise concentration checks");
        }
        Err(e) => return Err(e),
    }

    let header = header_lines(
        common,
        &[
            "frame: canonical (u* = v* = e1)".to_string(),
            format!("n1: {} n2: {} m: {}", size.n1, size.n2, m),
            format!("horizon: {horizon} eta: {eta}"),
            format!("rip_delta_hat: {:.6e}", rip.estimate.delta_hat),
        ],
    );
    std::fs::create_dir_all(&common.out_dir)?;
    let path = common.out_dir.join(format!("diagnostics_{}.csv", common.seed));
    std::fs::write(&path, checks_to_csv(&rows, &header))?;
    println!("wrote {}", path.display());
    let unsatisfied = rows.iter().filter(|r| !r.satisfied).count();
    println!(
        "{} checks, {} informative violations, primary status {}",
        rows.len(),
        unsatisfied,
        coupling.primary_termination.label()
    );
    Ok(if matches!(coupling.primary_termination, Termination::Failed(_)) { 2 } else { 0 })
}

fn cmd_rip(
    size: &SizeArgs,
    samples: usize,
    canonical: bool,
    common: &CommonArgs,
) -> Result<u8, Error> {
    let job = size.into_job(1, InitKind::RandomSphere, common.seed, common);
    let m = job.resolve_m()?;
    let dims = ProblemDims::new(size.n1, size.n2, m, 1)?;
    let mut op = SensingOperator::build(dims, StreamKey::new(common.seed, Lane::Measurement), common.memory_budget);
    if canonical {
        op = op.into_canonical();
    }
    let report = estimate_rip(&op, samples.max(1), &StreamKey::new(common.seed, Lane::Trial))?;
    let mut rows = vec![CheckRecord {
        t: 0,
        name: "rip_delta_hat".into(),
        lhs: report.estimate.delta_hat,
        rhs: 1.0,
        satisfied: report.estimate.delta_hat < 1.0,
    }];
    rows.extend(report.split_checks);
    let header = header_lines(
        common,
        &[
            format!("n1: {} n2: {} m: {}", size.n1, size.n2, m),
            format!(
                "samples: {} max_rank_tested: {}",
                report.estimate.sample_count, report.estimate.max_rank_tested
            ),
            "delta_hat is a sampled lower-bound estimate, not a certificate".to_string(),
        ],
    );
    std::fs::create_dir_all(&common.out_dir)?;
    let path = common.out_dir.join(format!("rip_{}.csv", common.seed));
    std::fs::write(&path, checks_to_csv(&rows, &header))?;
    println!("delta_hat = {:.6e} ({} samples)", report.estimate.delta_hat, samples);
    println!("wrote {}", path.display());
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8, Error> {
    if let Some(jobs) = cli.jobs {
        // May fail when a pool already exists; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    match &cli.command {
        Command::Run { size, init, rank, common } => {
            cmd_run_like(size, *rank, (*init).into(), common, false)
        }
        Command::Sweep { n_grid, oversampling_grid, trials, init, full, rank, common } => {
            cmd_sweep(n_grid, oversampling_grid, *trials, (*init).into(), *full, *rank, common)
        }
        Command::RankR { size, rank, init, common } => {
            cmd_run_like(size, *rank, (*init).into(), common, true)
        }
        Command::Diagnose { size, horizon, eta, rip_samples, common } => {
            cmd_diagnose(size, *horizon, *eta, *rip_samples, common)
        }
        Command::Rip { size, samples, canonical, common } => {
            cmd_rip(size, *samples, *canonical, common)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
