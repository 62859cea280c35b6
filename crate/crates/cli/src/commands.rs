use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use codesign_core::analysis::{self, AnalysisConfig};
use codesign_core::cost::Cost;
use codesign_core::ea::{self, write_trace_csv, FinalController, RunResult};
use codesign_core::experiment::{self, baselines, improvement, Arm, Baselines, ExperimentReport, Stats};
use codesign_core::genome::{prune_by_magnitude, Evaluator};
use codesign_core::lqr::{dare_residual, spectral_radius, LqrProblem};
use codesign_core::plant::{matrix_to_rows, Plant, PlantFile};
use codesign_core::repair::{repair_controller, RepairConfig};
use serde::{Deserialize, Serialize};

use crate::config::{PlantKind, PlantSpec, RunConfig};
use crate::output::{read_json, write_csv, write_json, Provenance};
use crate::{AnalyzeArgs, GenPlantArgs, PlantArgs, RepairDemoArgs, ReproArgs, RunEaArgs, SolveLqrArgs};

pub const THREADS_ENV: &str = "CODESIGN_THREADS";

/// Caps the evaluation thread pool from `CODESIGN_THREADS` (0 or unset = automatic).
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw.trim().parse().with_context(|| format!("{THREADS_ENV} must be a non-negative integer, got `{raw}`"))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Writes to stdout, treating a closed pipe (e.g. `| head`) as success.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write as _;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn apply_plant_args(spec: &mut PlantSpec, args: &PlantArgs) {
    if let Some(k) = args.kind {
        spec.kind = k;
    }
    if let Some(r) = args.rows {
        spec.rows = r;
    }
    if let Some(c) = args.cols {
        spec.cols = c;
    }
    if let Some(s) = args.plant_seed {
        spec.seed = s;
    }
    if args.radius.is_some() {
        spec.target_radius = args.radius;
    }
}

fn write_plant(path: &Path, plant: &Plant, provenance: &Provenance) -> Result<()> {
    write_json(path, &PlantFile::from(plant), provenance)
}

pub fn gen_plant(args: GenPlantArgs) -> Result<()> {
    let spec = PlantSpec { kind: args.kind, rows: args.rows, cols: args.cols, seed: args.seed, target_radius: args.radius };
    let plant = spec.build()?;
    write_plant(&args.out, &plant, &Provenance::new(&spec, Some(spec.seed))?)?;
    println!(
        "wrote {} ({} subsystems, N_x = {}, N_u = {}, spectral radius {:.6})",
        args.out.display(),
        plant.n_subsystems(),
        plant.n_states(),
        plant.n_inputs(),
        spectral_radius(&plant.a)?
    );
    Ok(())
}

#[derive(Serialize)]
struct LqrDocument {
    #[serde(rename = "K_dense")]
    k_dense: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "J_dense")]
    j_dense: f64,
    closed_loop_radius: f64,
    dare_residual: f64,
    /// Initial-state covariance used for the cost.
    sigma: &'static str,
}

pub fn solve_lqr(args: SolveLqrArgs) -> Result<()> {
    let plant = Plant::load(&args.plant).with_context(|| format!("loading {}", args.plant.display()))?;
    let problem = LqrProblem::identity_weights(plant.a.clone(), plant.b.clone())?;
    let sol = problem.solve()?;
    let doc = LqrDocument {
        k_dense: matrix_to_rows(&sol.gain),
        p: matrix_to_rows(&sol.p),
        j_dense: sol.cost,
        closed_loop_radius: spectral_radius(&problem.closed_loop(&sol.gain))?,
        dare_residual: dare_residual(&problem.a, &problem.b, &problem.q, &problem.r, &sol.p),
        sigma: "identity",
    };
    let prov = Provenance::new(&PlantFile::from(&plant), plant.metadata.seed)?;
    write_json(&args.out, &doc, &prov)?;
    println!("J_dense = {:.6}, closed-loop spectral radius {:.6}", doc.j_dense, doc.closed_loop_radius);
    Ok(())
}

/// Per-run summary written next to the trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub final_controller: FinalController,
    pub dense_cost: Cost,
    /// Present when baselines were requested; `"inf"` if the diagonal gain is unstable.
    pub diagonal_cost: Option<Cost>,
    pub truncation_costs: Vec<(usize, Cost)>,
    pub improvement_dense_pct: f64,
    pub improvement_diagonal_pct: Option<f64>,
    /// `J_EA(θ*_t) / J_EA(K_d)` for `t = 1..=G_max`.
    pub normalized_trajectory: Vec<f64>,
    pub normalized_final: f64,
    /// Path of the analysis report, once `analyze` has run.
    pub analysis_report: Option<String>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    fn new(run: &RunResult, base: Option<&Baselines>, seconds: f64) -> Self {
        let cost = run.best.cost().value();
        let dense = run.dense.j_ea;
        Self {
            final_controller: FinalController::from(&run.best),
            dense_cost: dense,
            diagonal_cost: base.map(|b| b.diagonal.j_ea),
            truncation_costs: base.map_or_else(Vec::new, |b| b.truncations.iter().map(|(l, e)| (*l, e.j_ea)).collect()),
            improvement_dense_pct: improvement(cost, dense.value()).unwrap_or(f64::NAN),
            improvement_diagonal_pct: base.and_then(|b| improvement(cost, b.diagonal.j_ea.value())),
            normalized_trajectory: run.normalized_trajectory(),
            normalized_final: run.normalized_final(),
            analysis_report: None,
            wall_clock_seconds: seconds,
        }
    }
}

fn resolve_run_config(args: &RunEaArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_plant_args(&mut cfg.plant, &args.plant_args);
    if let Some(p) = &args.plant {
        cfg.plant_file = Some(p.clone());
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let e = &mut cfg.ea;
    macro_rules! set {
        ($($field:ident => $target:expr),* $(,)?) => {$(if let Some(v) = args.$field { $target = v; })*};
    }
    set!(
        seed => e.seed,
        seeds => e.seeds,
        population => e.population,
        generations => e.generations,
        elites => e.elites,
        crossover_prob => e.crossover_prob,
        mutation_prob => e.mutation_prob,
        temperature => e.temperature,
        mutation_range => e.mutation_range,
        w_a => cfg.weights.w_a,
        w_s => cfg.weights.w_s,
        w_c => cfg.weights.w_c,
    );
    if args.repair || args.repair_target.is_some() || args.repair_max_iter.is_some() {
        let r = cfg.repair.get_or_insert_with(RepairConfig::default);
        if let Some(t) = args.repair_target {
            r.target = t;
        }
        if let Some(m) = args.repair_max_iter {
            r.max_iter = m;
        }
    }
    cfg.baselines |= args.baselines;
    cfg.extra_baselines |= args.extra_baselines;
    Ok(cfg)
}

#[derive(Serialize)]
struct MultiSeedSummary {
    seeds: Vec<u64>,
    final_cost: Stats,
    normalized_final: Stats,
    improvement_dense_pct: Stats,
    /// Over seeds whose diagonal baseline is stable.
    improvement_diagonal_pct: Option<Stats>,
    wall_clock_seconds: f64,
}

pub fn run_ea(args: RunEaArgs) -> Result<()> {
    let cfg = resolve_run_config(&args)?;
    cfg.validate()?;
    let plant = cfg.plant()?;
    let out = cfg.output_dir.clone();
    // Where the run is written does not change its results, so it stays out of the hash.
    let hashed = RunConfig { output_dir: PathBuf::new(), ..cfg.clone() };
    let prov = Provenance::new(&hashed, Some(cfg.ea.seed))?;
    write_json(&out.join("config.json"), &cfg, &prov)?;
    write_plant(&out.join("plant.json"), &plant, &prov)?;

    let with_baselines = cfg.baselines || cfg.extra_baselines;
    let base = if with_baselines { Some(baselines(&Evaluator::new(&plant, cfg.weights)?, cfg.extra_baselines)?) } else { None };
    let seeds = cfg.seeds();
    let multi = seeds.len() > 1;
    let total = Instant::now();
    let mut reports = Vec::new();
    let mut trajectories = Vec::new();
    for &seed in &seeds {
        let dir = if multi { out.join(format!("seed-{seed}")) } else { out.clone() };
        let sprov = prov.with_seed(seed);
        let start = Instant::now();
        let run = ea::run(&plant, &cfg.ea_config(seed))?;
        let report = RunReport::new(&run, base.as_ref(), start.elapsed().as_secs_f64());
        write_csv(&dir.join("trace.csv"), &sprov, |buf| write_trace_csv(buf, &run.traces, None))?;
        write_json(&dir.join("final_controller.json"), &report.final_controller, &sprov)?;
        write_json(&dir.join("run.json"), &run, &sprov)?;
        write_json(&dir.join("run_report.json"), &report, &sprov)?;
        if multi {
            write_plant(&dir.join("plant.json"), &plant, &sprov)?;
        }
        let c = run.best.eval.counts;
        println!(
            "seed {seed}: J_EA {:.4} (normalized {:.4}, improvement {:.1}% vs dense{}) with {} actuators, {} sensors, {} links{}",
            run.best.cost(),
            report.normalized_final,
            report.improvement_dense_pct,
            report.improvement_diagonal_pct.map_or_else(String::new, |v| format!(", {v:.1}% vs diagonal")),
            c.n_act,
            c.n_sens,
            c.n_comm,
            if run.best.eval.repaired { ", repaired" } else { "" },
        );
        trajectories.push(report.normalized_trajectory.clone());
        reports.push(report);
    }
    if let Some(b) = &base {
        println!("baselines: dense J_EA {}, diagonal J_EA {}", b.dense.j_ea, b.diagonal.j_ea);
        for (ell, t) in &b.truncations {
            println!("  truncation to {ell} entries: J_EA {}", t.j_ea);
        }
    }
    if multi {
        let stat = |f: &dyn Fn(&RunReport) -> f64| Stats::of(&reports.iter().map(f).collect::<Vec<_>>());
        let diag: Vec<f64> = reports.iter().filter_map(|r| r.improvement_diagonal_pct).collect();
        let summary = MultiSeedSummary {
            seeds: seeds.clone(),
            final_cost: stat(&|r| r.final_controller.cost.j_ea.value()),
            normalized_final: stat(&|r| r.normalized_final),
            improvement_dense_pct: stat(&|r| r.improvement_dense_pct),
            improvement_diagonal_pct: (!diag.is_empty()).then(|| Stats::of(&diag)),
            wall_clock_seconds: total.elapsed().as_secs_f64(),
        };
        write_json(&out.join("summary.json"), &summary, &prov)?;
        write_csv(&out.join("summary_trajectory.csv"), &prov, |buf| {
            trajectory_csv(buf, &trajectories);
            Ok(())
        })?;
        println!(
            "mean normalized final cost {:.4} ± {:.4} over {} seeds",
            summary.normalized_final.mean,
            summary.normalized_final.std,
            seeds.len()
        );
    }
    Ok(())
}

/// `generation,mean,std` rows over equally long trajectories.
fn trajectory_csv(buf: &mut Vec<u8>, trajectories: &[Vec<f64>]) {
    use std::fmt::Write as _;
    let mut s = String::from("generation,mean,std\n");
    let len = trajectories.iter().map(Vec::len).min().unwrap_or(0);
    for t in 0..len {
        let st = Stats::of(&trajectories.iter().map(|tr| tr[t]).collect::<Vec<_>>());
        let _ = writeln!(s, "{},{},{}", t + 1, st.mean, st.std);
    }
    buf.extend_from_slice(s.as_bytes());
}

fn provenance_of(path: &Path) -> Result<Provenance> {
    let v: serde_json::Value = read_json(path)?;
    serde_json::from_value(v["provenance"].clone()).with_context(|| format!("{} has no provenance block", path.display()))
}

#[derive(Serialize)]
struct PartialAnalysis {
    error: String,
    lipschitz: Option<analysis::LipschitzEstimate>,
    n_delta: Vec<usize>,
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let dir = &args.run;
    let run_path = dir.join("run.json");
    let run: RunResult = read_json(&run_path)?;
    let plant = Plant::load(dir.join("plant.json")).with_context(|| format!("loading the plant of {}", dir.display()))?;
    let prov = provenance_of(&run_path)?;
    let out = args.out.clone().unwrap_or_else(|| dir.clone());
    let ev = Evaluator::new(&plant, run.config.weights)?;
    let graph = plant.graph();
    let cfg = AnalysisConfig { sublevel: args.sublevel, lipschitz_samples: args.samples, seed: args.seed };

    let report = match analysis::analyze(&ev, &graph, &run, &cfg) {
        Ok(r) => r,
        Err(e) => {
            let lipschitz = analysis::estimate_lipschitz(&ev.problem, &ev.k_dense, ev.j_dense, cfg.sublevel, cfg.lipschitz_samples, cfg.seed).ok();
            let partial = PartialAnalysis { error: e.to_string(), lipschitz, n_delta: graph.distance_counts() };
            write_json(&out.join("analysis.json"), &partial, &prov)?;
            return Err(e).context("analysis incomplete; partial results written to analysis.json");
        }
    };
    let analysis_path = out.join("analysis.json");
    write_json(&analysis_path, &report, &prov)?;
    write_csv(&out.join("phi.csv"), &prov, |buf| analysis::write_phi_csv(buf, &report.phi))?;
    write_csv(&out.join("predicted.csv"), &prov, |buf| analysis::write_predicted_csv(buf, &report.predicted_curve))?;

    let report_path = dir.join("run_report.json");
    if report_path.is_file() {
        let mut rr: RunReport = read_json(&report_path)?;
        rr.analysis_report = Some(if out == *dir { "analysis.json".into() } else { analysis_path.display().to_string() });
        write_json(&report_path, &rr, &provenance_of(&report_path)?)?;
    }
    println!(
        "L_J {:.4e}, decay Υ {:.4} ρ {:.4}, h* {}, σ_crit {:.4e}, h_stab {}{}, ℓ_stab {}",
        report.l_j,
        report.decay.upsilon,
        report.decay.rho,
        report.h_star,
        report.sigma_crit,
        report.h_stab,
        if report.h_stab_vacuous { " (vacuous)" } else { "" },
        report.ell_stab
    );
    Ok(())
}

#[derive(Serialize)]
struct RepairDocument {
    ell: usize,
    /// Spectral radius of the pruned closed loop; `initial_radius` and
    /// `final_radius` are Gershgorin bounds.
    initial_closed_loop_radius: f64,
    #[serde(flatten)]
    result: codesign_core::repair::RepairResult,
}

pub fn repair_demo(args: RepairDemoArgs) -> Result<()> {
    let plant = match &args.plant {
        Some(p) => Plant::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let mut spec = PlantSpec { kind: PlantKind::Grid, target_radius: Some(experiment::UNSTABLE_RADIUS), ..PlantSpec::default() };
            apply_plant_args(&mut spec, &args.plant_args);
            spec.build()?
        }
    };
    let config = RepairConfig { target: args.target, max_iter: args.max_iter };
    config.validate()?;
    let problem = LqrProblem::identity_weights(plant.a.clone(), plant.b.clone())?;
    let k_dense = problem.solve()?.gain;
    let total = k_dense.len();
    let ell = args.ell.unwrap_or(total / 2).min(total);
    let k_s = prune_by_magnitude(&k_dense, ell);
    let doc = RepairDocument {
        ell,
        initial_closed_loop_radius: spectral_radius(&problem.closed_loop(&k_s))?,
        result: repair_controller(&plant.a, &plant.b, &k_s, &config)?,
    };
    let prov = Provenance::new(&(PlantFile::from(&plant), config, ell), plant.metadata.seed)?;
    match &args.out {
        Some(p) => write_json(p, &doc, &prov)?,
        None => print_stdout(&format!("{}\n", serde_json::to_string_pretty(&doc)?))?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    final_cost: Cost,
    dense_cost: Cost,
    diagonal_cost: Cost,
    truncation_costs: Vec<(usize, Cost)>,
    improvement_dense_pct: f64,
    improvement_diagonal_pct: Option<f64>,
    ell: usize,
    n_act: usize,
    n_sens: usize,
    n_comm: usize,
    repaired: bool,
    unstable_fraction: f64,
}

#[derive(Serialize)]
struct ArmSummary {
    repair: Option<RepairConfig>,
    final_cost: Stats,
    normalized_final: Stats,
    improvement_dense_pct: Stats,
    improvement_diagonal_pct: Stats,
    diagonal_unstable: usize,
    unstable_fraction: Stats,
    unstable_fraction_first_generations: Stats,
    runs: Vec<SeedSummary>,
}

impl From<&Arm> for ArmSummary {
    fn from(arm: &Arm) -> Self {
        Self {
            repair: arm.repair,
            final_cost: arm.final_cost,
            normalized_final: arm.normalized_final,
            improvement_dense_pct: arm.improvement_dense,
            improvement_diagonal_pct: arm.improvement_diagonal,
            diagonal_unstable: arm.diagonal_unstable,
            unstable_fraction: arm.unstable_fraction,
            unstable_fraction_first_generations: arm.unstable_fraction_early,
            runs: arm
                .runs
                .iter()
                .map(|r| {
                    let best = &r.result.best;
                    SeedSummary {
                        seed: r.seed,
                        final_cost: best.cost(),
                        dense_cost: r.baselines.dense.j_ea,
                        diagonal_cost: r.baselines.diagonal.j_ea,
                        truncation_costs: r.baselines.truncations.iter().map(|(l, e)| (*l, e.j_ea)).collect(),
                        improvement_dense_pct: r.improvement_dense,
                        improvement_diagonal_pct: r.improvement_diagonal,
                        ell: best.gene.ell,
                        n_act: best.eval.counts.n_act,
                        n_sens: best.eval.counts.n_sens,
                        n_comm: best.eval.counts.n_comm,
                        repaired: best.eval.repaired,
                        unstable_fraction: r.unstable_fraction,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct ReproSummary {
    experiment: String,
    seeds: Vec<u64>,
    arms: Vec<ArmSummary>,
    wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct ReproConfig {
    experiment: String,
    seeds: Vec<u64>,
    ea: ea::EaConfig,
    extra_baselines: bool,
}

pub fn repro(args: ReproArgs) -> Result<()> {
    let id = args.experiment;
    let seeds: Vec<u64> = match args.seeds {
        Some(n) => (0..n as u64).map(|i| args.first_seed + i).collect(),
        None => id.default_seeds().into_iter().map(|s| s + args.first_seed - 1).collect(),
    };
    let mut base = ea::EaConfig::default();
    if let Some(g) = args.generations {
        if g == 0 {
            bail!("--generations must be at least 1");
        }
        base.generations = g;
    }
    let prov = Provenance::new(&ReproConfig { experiment: id.to_string(), seeds: seeds.clone(), ea: base.clone(), extra_baselines: args.extra_baselines }, None)?;
    let start = Instant::now();
    let report = experiment::run_experiment(id, &seeds, &base, args.extra_baselines)?;
    let seconds = start.elapsed().as_secs_f64();
    let out = args.out.join(id.name());
    write_repro(&out, &report, &prov, seconds)?;
    print_stdout(&report.summary())?;
    println!("wrote {} in {seconds:.1} s", out.display());
    Ok(())
}

fn arm_tag(arm: &Arm) -> &'static str {
    if arm.repair.is_some() {
        "with-repair"
    } else {
        "without-repair"
    }
}

fn write_repro(out: &Path, report: &ExperimentReport, prov: &Provenance, seconds: f64) -> Result<()> {
    crate::output::write_atomic(&out.join("summary.txt"), report.summary().as_bytes())?;
    let summary = ReproSummary {
        experiment: report.id.to_string(),
        seeds: report.seeds.clone(),
        arms: report.arms.iter().map(ArmSummary::from).collect(),
        wall_clock_seconds: seconds,
    };
    write_json(&out.join("summary.json"), &summary, prov)?;
    for arm in &report.arms {
        let tag = arm_tag(arm);
        for run in &arm.runs {
            let path: PathBuf = out.join(tag).join(format!("seed-{}.csv", run.seed));
            write_csv(&path, &prov.with_seed(run.seed), |buf| write_trace_csv(buf, &run.result.traces, None))?;
        }
        let trajectories: Vec<Vec<f64>> = arm.runs.iter().map(|r| r.result.normalized_trajectory()).collect();
        write_csv(&out.join(format!("trajectory-{tag}.csv")), prov, |buf| {
            trajectory_csv(buf, &trajectories);
            Ok(())
        })?;
        write_csv(&out.join(format!("unstable-{tag}.csv")), prov, |buf| {
            unstable_csv(buf, arm);
            Ok(())
        })?;
    }
    Ok(())
}

/// Per-generation unstable-individual counts, one column per seed.
fn unstable_csv(buf: &mut Vec<u8>, arm: &Arm) {
    use std::fmt::Write as _;
    let mut s = String::from("generation");
    for r in &arm.runs {
        let _ = write!(s, ",seed_{}", r.seed);
    }
    s.push('\n');
    let len = arm.runs.iter().map(|r| r.result.traces.len()).min().unwrap_or(0);
    for t in 0..len {
        let _ = write!(s, "{}", t + 1);
        for r in &arm.runs {
            let _ = write!(s, ",{}", r.result.traces[t].n_unstable);
        }
        s.push('\n');
    }
    buf.extend_from_slice(s.as_bytes());
}
