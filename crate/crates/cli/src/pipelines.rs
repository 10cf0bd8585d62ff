use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aoi_core::constrained::LambdaProbe;
use aoi_core::sim::{trial_seed, write_trace_csv};
use aoi_core::structure::extract_boundary;
use aoi_core::{
    build_kernel, calibrate_random_baseline, check_monotone_delta, check_monotone_l,
    compare_policies, run_trial, solve_cmdp, DeterministicPolicy, Execution, MixturePolicy,
    ModelParams, RandomBaseline, SimPolicy, SimReport, ThresholdBoundary,
};
use serde::Serialize;

use crate::config::{point_label, ExperimentSpec, Pipeline};

pub const SCHEMA_VERSION: u32 = 1;
/// Slack allowed on the analytic transmission rate of a solved mixture.
pub const BUDGET_TOL: f64 = 1e-6;

fn point_dir(out: &Path, params: &ModelParams) -> PathBuf {
    out.join(format!(
        "p{}_gamma{}_gmax{}",
        params.p, params.gamma, params.gamma_max
    ))
}

fn label(params: &ModelParams) -> String {
    point_label(params.p, params.gamma, params.gamma_max)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn schema_line(w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# schema_version={SCHEMA_VERSION}")
}

pub fn write_policy_csv(path: &Path, policy: &DeterministicPolicy) -> Result<()> {
    let mut w = create(path)?;
    schema_line(&mut w)?;
    writeln!(w, "delta,l,b,action")?;
    for (s, a) in policy.space().states().zip(policy.actions()) {
        writeln!(
            w,
            "{},{},{},{}",
            s.age,
            s.attempts,
            u8::from(s.fresh),
            a.code()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_boundary_csv(path: &Path, boundary: &ThresholdBoundary) -> Result<()> {
    let mut w = create(path)?;
    schema_line(&mut w)?;
    writeln!(w, "l,b,delta_star")?;
    for t in &boundary.slices {
        match t.delta_star {
            Some(d) => writeln!(w, "{},{},{d}", t.attempts, u8::from(t.fresh))?,
            None => writeln!(w, "{},{},never", t.attempts, u8::from(t.fresh))?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Solve record of one grid point. `c` is the long-run age and `d` the
/// transmission rate of each component policy.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub schema_version: u32,
    pub p: f64,
    pub gamma: f64,
    pub gamma_max: f64,
    pub delta_max: u32,
    pub l_max: u32,
    pub epsilon_lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub expected_aoi: f64,
    pub expected_tx: f64,
    pub fresh_tx_given_new: f64,
    pub binding: bool,
    pub threshold_structure: bool,
    pub probes: Vec<LambdaProbe>,
}

struct Solved {
    params: ModelParams,
    mixture: MixturePolicy,
}

impl Solved {
    fn binding(&self) -> bool {
        self.mixture
            .probes
            .first()
            .is_some_and(|p| p.avg_tx > self.params.gamma_max)
    }

    fn summary(&self, epsilon_lambda: f64, threshold_structure: bool) -> SolveSummary {
        let m = &self.mixture;
        let t = m.targets();
        SolveSummary {
            schema_version: SCHEMA_VERSION,
            p: self.params.p,
            gamma: self.params.gamma,
            gamma_max: self.params.gamma_max,
            delta_max: self.params.delta_max,
            l_max: self.params.l_max,
            epsilon_lambda,
            lambda1: m.lambda1,
            lambda2: m.lambda2,
            mu: m.mu,
            c1: m.eval1.avg_aoi,
            c2: m.eval2.avg_aoi,
            d1: m.eval1.avg_tx,
            d2: m.eval2.avg_tx,
            expected_aoi: t.expected_aoi,
            expected_tx: t.expected_tx,
            fresh_tx_given_new: t.fresh_tx_given_new,
            binding: self.binding(),
            threshold_structure,
            probes: m.probes.clone(),
        }
    }
}

fn solve_point(spec: &ExperimentSpec, params: ModelParams) -> Result<Solved> {
    let kernel = build_kernel(&params)?;
    let mixture = solve_cmdp(&kernel, spec.epsilon_lambda, &spec.rvi())?;
    let expected_tx = mixture.targets().expected_tx;
    if expected_tx > params.gamma_max + BUDGET_TOL {
        bail!(
            "solved mixture overspends: rate {expected_tx} above {}",
            params.gamma_max
        );
    }
    Ok(Solved { params, mixture })
}

/// Runs `work` on every grid point on the worker pool, keeping grid order.
fn for_each_point<T: Send>(
    spec: &ExperimentSpec,
    work: impl Fn(ModelParams) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    spec.validate()?;
    let grid = spec.grid()?;
    Execution::Parallel
        .map(grid.len(), |i| {
            work(grid[i]).with_context(|| format!("grid point {}", label(&grid[i])))
        })
        .into_iter()
        .collect()
}

/// Solves every grid point and writes its policy maps, threshold
/// boundaries and summary.
pub fn run_solve(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let files = for_each_point(spec, |params| {
        let solved = solve_point(spec, params)?;
        let dir = point_dir(&spec.out, &params);
        let mut files = Vec::new();
        let mut structured = true;
        for (name, policy) in [
            ("lambda1", &solved.mixture.pi1),
            ("lambda2", &solved.mixture.pi2),
        ] {
            let path = dir.join(format!("policy_{name}.csv"));
            write_policy_csv(&path, policy)?;
            files.push(path);
            match extract_boundary(policy) {
                Ok(boundary) => {
                    let path = dir.join(format!("boundary_{name}.csv"));
                    write_boundary_csv(&path, &boundary)?;
                    files.push(path);
                }
                Err(_) => structured = false,
            }
        }
        let path = dir.join("summary.json");
        write_json(&path, &solved.summary(spec.epsilon_lambda, structured))?;
        files.push(path);
        Ok(files)
    })?;
    Ok(files.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub p: f64,
    pub gamma: f64,
    pub gamma_max: f64,
    pub age_violations: [usize; 2],
    pub attempt_violations: [usize; 2],
    pub round_trip: [bool; 2],
    /// Thresholds of the larger-multiplier policy are nowhere earlier.
    pub lambda_dominance: bool,
    /// Transmission rate never rises along the probed multipliers.
    pub dual_monotone: bool,
    pub mu_in_range: bool,
    pub budget_met: bool,
    pub clamp_safe: bool,
    pub passed: bool,
}

fn verify_point(spec: &ExperimentSpec, params: ModelParams) -> Result<VerifyReport> {
    let solved = solve_point(spec, params)?;
    let m = &solved.mixture;
    let policies = [&m.pi1, &m.pi2];
    let age = policies.map(|p| check_monotone_delta(p).violations.len());
    let attempts = policies.map(|p| check_monotone_l(p).violations.len());
    let boundaries = policies.map(|p| extract_boundary(p).ok());
    let round_trip = [0, 1].map(|k| {
        boundaries[k]
            .as_ref()
            .is_some_and(|b| b.reconstruct() == *policies[k])
    });
    let lambda_dominance = match &boundaries {
        [Some(b1), Some(b2)] => b2.dominates(b1),
        _ => false,
    };
    let mut probes = m.probes.clone();
    probes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let dual_monotone = probes
        .windows(2)
        .all(|w| w[1].avg_tx <= w[0].avg_tx + 1e-12);
    let tx = m.targets().expected_tx;
    let budget_met = if solved.binding() {
        (tx - params.gamma_max).abs() <= BUDGET_TOL
    } else {
        tx <= params.gamma_max + BUDGET_TOL
    };
    let mu_in_range = (0.0..=1.0).contains(&m.mu);
    let clamp_safe = policies.iter().all(|p| p.check_clamp_safe().is_ok());
    let passed = age == [0, 0]
        && attempts == [0, 0]
        && round_trip == [true, true]
        && lambda_dominance
        && dual_monotone
        && mu_in_range
        && budget_met
        && clamp_safe;
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        p: params.p,
        gamma: params.gamma,
        gamma_max: params.gamma_max,
        age_violations: age,
        attempt_violations: attempts,
        round_trip,
        lambda_dominance,
        dual_monotone,
        mu_in_range,
        budget_met,
        clamp_safe,
        passed,
    })
}

/// Solves every grid point and checks the threshold structure, the
/// multiplier ordering and budget compliance. Fails if any point fails.
pub fn run_verify(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let reports = for_each_point(spec, |params| {
        let report = verify_point(spec, params)?;
        let path = point_dir(&spec.out, &params).join("verify.json");
        write_json(&path, &report)?;
        Ok((path, report))
    })?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|(_, r)| !r.passed)
        .map(|(_, r)| point_label(r.p, r.gamma, r.gamma_max))
        .collect();
    if !failed.is_empty() {
        bail!("verification failed at {}", failed.join(", "));
    }
    Ok(reports.into_iter().map(|(path, _)| path).collect())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimSummary {
    pub mean_aoi: f64,
    pub se_aoi: f64,
    pub mean_tx: f64,
    pub se_tx: f64,
    pub fresh_tx_given_new: f64,
}

impl From<&SimReport> for SimSummary {
    fn from(r: &SimReport) -> Self {
        SimSummary {
            mean_aoi: r.mean_aoi,
            se_aoi: r.se_aoi,
            mean_tx: r.mean_tx,
            se_tx: r.se_tx,
            fresh_tx_given_new: r.fresh_tx_given_new,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateRecord {
    pub schema_version: u32,
    pub p: f64,
    pub gamma: f64,
    pub gamma_max: f64,
    pub seed: u64,
    pub horizon: u64,
    pub trials: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub expected_aoi: f64,
    pub expected_tx: f64,
    pub fresh_tx_given_new: f64,
    pub optimal: SimSummary,
    pub random_q: f64,
    pub random_expected_aoi: f64,
    pub random_expected_tx: f64,
    pub random: SimSummary,
    /// Per-trial random minus optimal age on common random numbers.
    pub paired_gap: f64,
    pub paired_gap_se: f64,
}

fn simulate_point(
    spec: &ExperimentSpec,
    params: ModelParams,
) -> Result<(Solved, RandomBaseline, SimulateRecord)> {
    let solved = solve_point(spec, params)?;
    let baseline = calibrate_random_baseline(&build_kernel(&params)?)?;
    let cfg = spec.sim(params);
    let reports = compare_policies(
        &cfg,
        &[
            ("optimal".into(), SimPolicy::mixture(&solved.mixture)?),
            ("random".into(), SimPolicy::Random(baseline)),
        ],
    )?;
    let (optimal, random) = (&reports[0].1, &reports[1].1);
    let (paired_gap, paired_gap_se) = random.paired_aoi_difference(optimal);
    let m = &solved.mixture;
    let t = m.targets();
    let record = SimulateRecord {
        schema_version: SCHEMA_VERSION,
        p: params.p,
        gamma: params.gamma,
        gamma_max: params.gamma_max,
        seed: cfg.seed,
        horizon: cfg.horizon,
        trials: cfg.trials,
        lambda1: m.lambda1,
        lambda2: m.lambda2,
        mu: m.mu,
        expected_aoi: t.expected_aoi,
        expected_tx: t.expected_tx,
        fresh_tx_given_new: t.fresh_tx_given_new,
        optimal: optimal.into(),
        random_q: baseline.q,
        random_expected_aoi: baseline.avg_aoi,
        random_expected_tx: baseline.avg_tx,
        random: random.into(),
        paired_gap,
        paired_gap_se,
    };
    Ok((solved, baseline, record))
}

/// Simulates the optimal mixture and the budget-matched random baseline at
/// every grid point on common random numbers.
pub fn run_simulate(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let files = for_each_point(spec, |params| {
        let (solved, _, record) = simulate_point(spec, params)?;
        let dir = point_dir(&spec.out, &params);
        let mut files = Vec::new();
        let path = dir.join("simulate.json");
        write_json(&path, &record)?;
        files.push(path);
        if spec.trace {
            let cfg = spec.sim(params);
            let mut trace = Vec::new();
            let policy = SimPolicy::mixture(&solved.mixture)?;
            run_trial(&policy, &cfg, trial_seed(cfg.seed, 0), Some(&mut trace))?;
            let path = dir.join("trace.csv");
            let mut w = create(&path)?;
            schema_line(&mut w)?;
            write_trace_csv(&mut w, &trace)?;
            w.flush()?;
            files.push(path);
        }
        Ok(files)
    })?;
    Ok(files.into_iter().flatten().collect())
}

pub const SWEEP_HEADER: &str = "p,gamma,gamma_max,lambda1,lambda2,mu,expected_aoi,expected_tx,\
fresh_tx_given_new,sim_fresh_tx_given_new,optimal_mean_aoi,optimal_se_aoi,optimal_mean_tx,\
random_q,random_expected_aoi,random_mean_aoi,random_se_aoi";

/// One table row per grid point: analytic optimum, simulated optimum and
/// simulated random baseline.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let records = for_each_point(spec, |params| Ok(simulate_point(spec, params)?.2))?;
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let path = spec.out.join("sweep.csv");
    let mut w = create(&path)?;
    schema_line(&mut w)?;
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in &records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.p,
            r.gamma,
            r.gamma_max,
            r.lambda1,
            r.lambda2,
            r.mu,
            r.expected_aoi,
            r.expected_tx,
            r.fresh_tx_given_new,
            r.optimal.fresh_tx_given_new,
            r.optimal.mean_aoi,
            r.optimal.se_aoi,
            r.optimal.mean_tx,
            r.random_q,
            r.random_expected_aoi,
            r.random.mean_aoi,
            r.random.se_aoi
        )?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Runs the configured pipelines in order and returns every file written.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for pipeline in &spec.pipelines {
        files.extend(match pipeline {
            Pipeline::Solve => run_solve(spec)?,
            Pipeline::Verify => run_verify(spec)?,
            Pipeline::Simulate => run_simulate(spec)?,
            Pipeline::Sweep => run_sweep(spec)?,
        });
    }
    Ok(files)
}
