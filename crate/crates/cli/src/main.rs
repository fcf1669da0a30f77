//! `zipscan` command-line front end.
//!
//! Exit statuses: 0 success, 1 unexpected failure, 2 usage error, 3 input or parse error,
//! 4 statistical degeneracy.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use zipscan::inference::{significance_with_log, write_replica_log};
use zipscan::io::read_region_file;
use zipscan::simulate::{build_hex_map, builtin_scenario, Scenario, ScenarioSpec, StudyConfig, StudyReport, StudyRunner};
use zipscan::{
    enumerate_circular_zones, Detector, EmConfig, EmDiagnostics, Method, NullReplicaConfig, ScanConfig, ScanError,
    TotalCasesRule,
};

#[derive(Parser)]
#[command(name = "zipscan", version, about = "Spatial scan statistics for zero-inflated Poisson counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the most likely cluster in a region file and test its significance.
    Detect(DetectArgs),
    /// Power, sensitivity and PPV of each method on simulated scenarios.
    Simulate(SimulateArgs),
    /// Type-I error of each method under the null with fixed structural zeros.
    NullStudy(NullStudyArgs),
}

#[derive(Args)]
struct Common {
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo null replicas per test.
    #[arg(long, visible_alias = "b", default_value_t = 999)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest zone population as a fraction of the total.
    #[arg(long, default_value_t = 0.5)]
    max_pop_fraction: f64,
    #[arg(long, default_value_t = 1e-8)]
    em_tol: f64,
    #[arg(long, default_value_t = 500)]
    em_max_iter: usize,
    /// Draw null replicas with the total population as case total instead of the observed cases.
    #[arg(long)]
    strict_paper_bootstrap: bool,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    /// Region CSV: id,x,y,population,cases[,structural_zero]
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long, default_value = "zipscan-detect.json")]
    out: PathBuf,
    /// Also write every replica statistic to this CSV.
    #[arg(long)]
    replica_log: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario names or scenario JSON files; comma separated or repeated.
    #[arg(long, required = true, value_delimiter = ',')]
    scenario: Vec<String>,
    #[arg(long, required = true, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Simulated studies per scenario.
    #[arg(long, visible_alias = "n", default_value_t = 1000)]
    studies: usize,
    #[arg(long, default_value = "zipscan-simulate.csv")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct NullStudyArgs {
    #[arg(long, required = true, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, visible_alias = "n", default_value_t = 1000)]
    studies: usize,
    #[arg(long, default_value = "zipscan-null-study.csv")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn scan_config(&self) -> ScanConfig {
        ScanConfig {
            max_pop_fraction: self.max_pop_fraction,
            em: EmConfig { tol: self.em_tol, max_iter: self.em_max_iter, ..EmConfig::default() },
            ..ScanConfig::default()
        }
    }

    fn total_cases_rule(&self) -> TotalCasesRule {
        if self.strict_paper_bootstrap {
            TotalCasesRule::PopulationTotal
        } else {
            TotalCasesRule::Observed
        }
    }

    fn study_config(&self, studies: usize) -> StudyConfig {
        StudyConfig {
            studies,
            replicas: self.replicas,
            seed: self.seed,
            alpha: self.alpha,
            total_cases_rule: self.total_cases_rule(),
        }
    }

    fn effective(&self) -> EffectiveConfig {
        EffectiveConfig {
            alpha: self.alpha,
            replicas: self.replicas,
            seed: self.seed,
            max_pop_fraction: self.max_pop_fraction,
            em_tol: self.em_tol,
            em_max_iter: self.em_max_iter,
            total_cases_rule: self.total_cases_rule(),
            workers: rayon::current_num_threads(),
        }
    }
}

/// Every setting that influences a result, written next to it.
#[derive(Serialize)]
struct EffectiveConfig {
    alpha: f64,
    replicas: usize,
    seed: u64,
    max_pop_fraction: f64,
    em_tol: f64,
    em_max_iter: usize,
    total_cases_rule: TotalCasesRule,
    workers: usize,
}

#[derive(Serialize)]
struct DetectReport {
    method: Method,
    input: String,
    best_zone: Vec<String>,
    cases_inside: u64,
    lambda: f64,
    log_lambda: f64,
    p_value: Option<f64>,
    lambda_star: Option<f64>,
    rejected: Option<bool>,
    #[serde(rename = "B")]
    replicas: usize,
    seed: u64,
    p_hat_null: Option<f64>,
    em: Option<EmDiagnostics>,
    config: EffectiveConfig,
}

#[derive(Serialize)]
struct StudyConfigFile<'a> {
    command: &'a str,
    scenarios: Vec<String>,
    methods: &'a [Method],
    studies: usize,
    map: &'a str,
    config: EffectiveConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_status(&err))
        }
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.chain().find_map(|e| e.downcast_ref::<ScanError>()) {
        Some(e) if e.is_input_error() => 3,
        Some(_) => 4,
        None => 1,
    }
}

/// A semantically invalid invocation that clap cannot catch on its own.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn run(cli: Cli) -> Result<PathBuf> {
    let common = match &cli.command {
        Command::Detect(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::NullStudy(a) => &a.common,
    };
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Usage("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    match cli.command {
        Command::Detect(a) => detect(a),
        Command::Simulate(a) => simulate(a),
        Command::NullStudy(a) => null_study(a),
    }
}

fn detect(args: DetectArgs) -> Result<PathBuf> {
    let c = &args.common;
    let (map, data) =
        read_region_file(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let data = match args.method {
        Method::Zip => data,
        // the indicators are unobserved for the other methods
        _ => data.without_structural_zeros(),
    };
    let scan = c.scan_config();
    let zones = enumerate_circular_zones(&map, scan.max_pop_fraction)?;
    let detector = Detector::new(&map, &zones, scan)?;
    let inference =
        NullReplicaConfig { replicas: c.replicas, seed: c.seed, alpha: c.alpha, total_cases_rule: c.total_cases_rule() };
    let (out, log) = significance_with_log(&detector, &data, args.method, &inference)?;
    if let Some(em) = &out.em {
        if em.zones_not_converged > 0 {
            eprintln!("warning: EM did not converge for {} of {} zones", em.zones_not_converged, em.zones_fitted);
        }
    }

    let mut best_zone: Vec<String> = out.best_zone.members.iter().map(|&i| map.region(i).id.clone()).collect();
    best_zone.sort();
    let report = DetectReport {
        method: args.method,
        input: args.input.display().to_string(),
        best_zone,
        cases_inside: out.cases_inside,
        lambda: out.lambda(),
        log_lambda: out.log_lambda,
        p_value: out.p_value,
        lambda_star: out.lambda_star(),
        rejected: out.rejected(),
        replicas: c.replicas,
        seed: c.seed,
        p_hat_null: out.replicas.as_ref().map(|r| r.p_hat),
        em: out.em.clone(),
        config: c.effective(),
    };
    write_json(&args.out, &report)?;
    if let Some(path) = &args.replica_log {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_replica_log(BufWriter::new(file), &log)?;
    }
    Ok(args.out)
}

fn simulate(args: SimulateArgs) -> Result<PathBuf> {
    let c = &args.common;
    let map = build_hex_map(c.seed);
    let scenarios = args.scenario.iter().map(|s| load_scenario(&map, s)).collect::<Result<Vec<_>>>()?;
    let scan = c.scan_config();
    let zones = enumerate_circular_zones(&map, scan.max_pop_fraction)?;
    let runner = StudyRunner::new(&map, &zones, scan, c.study_config(args.studies))?;
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        eprintln!("scenario {}: cluster risk {:.4}", s.name, s.cluster_risk());
        reports.push(runner.power_study(s, &args.methods)?);
    }

    let mut csv = String::from("scenario,method,power,sensitivity,ppv,N,B,seed\n");
    for r in &reports {
        for m in &r.methods {
            csv += &format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scenario, m.method, m.power, m.sensitivity, m.ppv, r.studies, r.replicas, r.seed
            );
        }
    }
    write_study(&args.out, &csv, &reports, "simulate", &args.methods, args.studies, c)?;
    Ok(args.out)
}

fn null_study(args: NullStudyArgs) -> Result<PathBuf> {
    let c = &args.common;
    let map = build_hex_map(c.seed);
    let scan = c.scan_config();
    let zones = enumerate_circular_zones(&map, scan.max_pop_fraction)?;
    let runner = StudyRunner::new(&map, &zones, scan, c.study_config(args.studies))?;
    let report = runner.type_i_study(&args.methods)?;

    let mut csv = String::from("scenario,method,rejection_rate,N,B,seed\n");
    for m in &report.methods {
        csv += &format!(
            "{},{},{},{},{},{}\n",
            report.scenario, m.method, m.power, report.studies, report.replicas, report.seed
        );
    }
    write_study(&args.out, &csv, std::slice::from_ref(&report), "null-study", &args.methods, args.studies, c)?;
    Ok(args.out)
}

/// A built-in scenario name, or a path to a scenario JSON file.
fn load_scenario(map: &zipscan::RegionMap, name: &str) -> Result<Scenario> {
    let path = Path::new(name);
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let spec = ScenarioSpec::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        return Ok(Scenario::from_spec(map, &spec)?);
    }
    Ok(builtin_scenario(map, name)?)
}

fn write_study(
    out: &Path,
    csv: &str,
    reports: &[StudyReport],
    command: &str,
    methods: &[Method],
    studies: usize,
    c: &Common,
) -> Result<()> {
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    let sidecar = StudyConfigFile {
        command,
        scenarios: reports.iter().map(|r| r.scenario.clone()).collect(),
        methods,
        studies,
        map: "hex-203",
        config: c.effective(),
    };
    let mut name = out.as_os_str().to_owned();
    name.push(".config.json");
    write_json(Path::new(&name), &sidecar)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
