use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use decoherence_core::analysis::validate_estimates;
use decoherence_core::config::ExperimentConfig;
use decoherence_core::dispersion::validate_assumptions;
use decoherence_core::experiment::{
    boltzmann_series_csv, fringe_csv, run_all_validations, run_boltzmann, run_cross_sections,
    run_decoherence_experiment, run_fringes, run_ladder, sig17, write_csv_file, write_json_file,
    BoltzmannSummary,
};
use decoherence_core::vector::norm;
use decoherence_core::Error;

#[derive(Parser, Debug)]
#[command(name = "decoherence", version, about = "Fringe decoherence of a two-bump electron wave packet in a thermal phonon field")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (created if missing); overrides output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overrides run.seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Caps the worker pool.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq)]
enum Command {
    /// Free fringe coefficients over the ε sweep and their ε → 0 limits.
    SimulateFringes,
    /// σ_P from the energy shell and from −2 Im Φ_P at the configured |P|.
    CrossSection,
    /// Residue sweep and resummation tables.
    LadderResum,
    /// Homogeneous relaxation of a Gaussian velocity distribution.
    Boltzmann,
    /// Assumption checks of the dispersion model.
    ValidateModel,
    /// Estimate probes (three dimensions only).
    ValidateEstimates,
    /// Damped versus free off-diagonal pairing, both routes.
    Decoherence,
    /// Every validation gate in order, with an aggregate verdict.
    ValidateAll,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Format {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::InvalidModel(_) => Failure::Config(e.to_string()),
            e => Failure::Run(e.to_string()),
        }
    }
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_CONFIG: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VALIDATION),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(m) => Failure::Config(m),
            e => Failure::from(e),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = Some(dir.display().to_string());
    }
    let out = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out).map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
    Ok((cfg, out))
}

/// Returns whether every gate of the subcommand passed.
fn run(cli: &Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    let (cfg, out) = load(cli)?;
    let json = cli.format == Format::Json;
    let file = |stem: &str| out.join(format!("{stem}.{}", if json { "json" } else { "csv" }));

    match cli.command {
        Command::SimulateFringes => {
            let sweep = run_fringes(&cfg)?;
            if json {
                write_json_file(&file("fringes"), &sweep)?;
            } else {
                let (h, rows) = fringe_csv(&sweep);
                write_csv_file(&file("fringes"), &h, &rows)?;
            }
            for l in &sweep.limits {
                println!(
                    "ptilde/P = {:>5}: limit {:.6} {:+.6}i (error {:.2e})",
                    l.ptilde_over_p, l.extrapolated.re, l.extrapolated.im, l.error_estimate
                );
            }
            Ok(true)
        }
        Command::CrossSection => {
            let reports = run_cross_sections(&cfg)?;
            if json {
                write_json_file(&file("cross_section"), &reports)?;
            } else {
                let rows = reports
                    .iter()
                    .map(|r| {
                        vec![
                            sig17(norm(&r.p)),
                            sig17(r.phi_p.re),
                            sig17(r.phi_p.im),
                            sig17(r.sigma_shell),
                            sig17(r.sigma_resolvent),
                            sig17(r.relative_gap),
                            sig17(r.tolerance),
                            r.passed.to_string(),
                        ]
                    })
                    .collect::<Vec<_>>();
                let h = ["p_norm", "phi_re", "phi_im", "sigma_shell", "sigma_resolvent", "relative_gap", "tolerance", "passed"];
                write_csv_file(&file("cross_section"), &h, &rows)?;
            }
            for r in &reports {
                println!(
                    "|P| = {}: sigma_shell {:.10} sigma_resolvent {:.10} gap {:.2e} {}",
                    norm(&r.p),
                    r.sigma_shell,
                    r.sigma_resolvent,
                    r.relative_gap,
                    verdict(r.passed)
                );
            }
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::LadderResum => {
            let report = run_ladder(&cfg)?;
            if json {
                write_json_file(&file("ladder"), &report)?;
            } else {
                let rows = report
                    .resummation
                    .iter()
                    .flat_map(|t| {
                        t.rows.iter().map(move |r| {
                            vec![
                                sig17(t.big_t),
                                r.k.to_string(),
                                sig17(r.partial_sum.re),
                                sig17(r.partial_sum.im),
                                sig17(r.ratio.re),
                                sig17(r.ratio.im),
                                sig17(t.damping),
                                sig17(r.error),
                            ]
                        })
                    })
                    .collect::<Vec<_>>();
                let h = ["T", "K", "partial_re", "partial_im", "ratio_re", "ratio_im", "damping", "error"];
                write_csv_file(&out.join("resummation.csv"), &h, &rows)?;
                let rows = report
                    .residue
                    .iter()
                    .map(|c| {
                        vec![
                            c.m.to_string(),
                            sig17(c.t),
                            sig17(c.eta),
                            sig17(c.closed.re),
                            sig17(c.closed.im),
                            sig17(c.numeric.re),
                            sig17(c.numeric.im),
                            sig17(c.relative_error),
                        ]
                    })
                    .collect::<Vec<_>>();
                let h = ["m", "t", "eta", "closed_re", "closed_im", "numeric_re", "numeric_im", "relative_error"];
                write_csv_file(&out.join("residue.csv"), &h, &rows)?;
            }
            let worst = report.residue.iter().map(|c| c.relative_error).fold(0.0, f64::max);
            println!("residue: {} points, worst relative error {worst:.2e}", report.residue.len());
            for t in &report.resummation {
                let last = t.rows.last().expect("nonempty table");
                println!("T = {}: |S_{}/free - damping| = {:.2e}", t.big_t, last.k, last.error);
            }
            Ok(true)
        }
        Command::Boltzmann => {
            let run = run_boltzmann(&cfg)?;
            if json {
                write_json_file(&file("boltzmann"), &BoltzmannSummary::from(&run))?;
            } else {
                std::fs::write(file("boltzmann"), boltzmann_series_csv(&run)?)
                    .map_err(|e| Failure::Run(e.to_string()))?;
            }
            let (first, last) = (&run.series[0], run.series.last().expect("nonempty series"));
            println!(
                "{} steps: mass {:.12} -> {:.12}, clipped {}",
                run.steps, first.mass, last.mass, run.clipped
            );
            Ok(true)
        }
        Command::ValidateModel => {
            let report = validate_assumptions(&cfg.model(), &cfg.run.validation);
            if json {
                write_json_file(&file("validate_model"), &report)?;
            } else {
                let rows = report
                    .checks
                    .iter()
                    .map(|c| {
                        vec![
                            c.name.clone(),
                            c.order.map(|o| o.to_string()).unwrap_or_default(),
                            sig17(c.fitted_constant),
                            sig17(c.declared_constant),
                            c.passed.to_string(),
                            c.detail.clone(),
                        ]
                    })
                    .collect::<Vec<_>>();
                let h = ["check", "order", "fitted", "declared", "passed", "detail"];
                write_csv_file(&file("validate_model"), &h, &rows)?;
            }
            for c in report.failures() {
                println!("FAIL {} (order {:?}): fitted {:.6e} declared {:.6e}", c.name, c.order, c.fitted_constant, c.declared_constant);
            }
            println!("dispersion model: {}", verdict(report.passed));
            Ok(report.passed)
        }
        Command::ValidateEstimates => {
            let mut lattice = cfg.run.estimates.clone();
            lattice.seed = cfg.require_seed()?;
            let probes = validate_estimates(&cfg.model(), &lattice)?;
            if json {
                write_json_file(&file("validate_estimates"), &probes)?;
            } else {
                let rows = probes
                    .iter()
                    .flat_map(|p| {
                        p.checks.iter().map(move |c| {
                            vec![
                                p.id.clone(),
                                c.name.clone(),
                                sig17(c.value),
                                sig17(c.lower),
                                sig17(c.upper),
                                c.passed.to_string(),
                                sig17(p.fitted_constant),
                                sig17(p.refinement_change),
                            ]
                        })
                    })
                    .collect::<Vec<_>>();
                let h = ["probe", "check", "value", "lower", "upper", "passed", "fitted_constant", "refinement_change"];
                write_csv_file(&file("validate_estimates"), &h, &rows)?;
            }
            for p in &probes {
                println!("{:<14} C = {:.6e} refinement {:.2e} {}", p.id, p.fitted_constant, p.refinement_change, verdict(p.passed));
            }
            Ok(probes.iter().all(|p| p.passed))
        }
        Command::Decoherence => {
            let bundle = run_decoherence_experiment(&cfg)?;
            if json {
                write_json_file(&file("decoherence"), &bundle)?;
            } else {
                let (h, rows) = bundle.rows_csv();
                write_csv_file(&file("decoherence"), &h, &rows)?;
            }
            println!("sigma_P = {:.12}  Phi_P = {:.12} {:+.12}i", bundle.sigma_p, bundle.phi_p.re, bundle.phi_p.im);
            for r in &bundle.rows {
                match r.ratio {
                    Some(z) => println!("eps {} T {}: ratio {:.12} target {:.12}", r.epsilon, r.big_t, z.re, r.target),
                    None => println!("eps {} T {}: observable does not resolve the fringes", r.epsilon, r.big_t),
                }
            }
            for s in &bundle.resummation {
                println!("T {}: resummation error {:.2e}", s.big_t, s.error);
            }
            Ok(true)
        }
        Command::ValidateAll => {
            if cfg.model.dim == 3 {
                cfg.require_seed()?;
            }
            let report = run_all_validations(&cfg)?;
            if json {
                write_json_file(&file("validate_all"), &report)?;
            } else {
                let rows = report
                    .checks
                    .iter()
                    .map(|c| {
                        vec![
                            c.name.clone(),
                            c.passed.map(|p| p.to_string()).unwrap_or_else(|| "skipped".into()),
                            sig17(c.value),
                            sig17(c.tolerance),
                        ]
                    })
                    .collect::<Vec<_>>();
                write_csv_file(&file("validate_all"), &["check", "passed", "value", "tolerance"], &rows)?;
            }
            for c in &report.checks {
                let v = match c.passed {
                    Some(p) => verdict(p),
                    None => "SKIPPED",
                };
                println!("{:<22} {v:<7} value {:.3e} tolerance {:.3e}", c.name, c.value, c.tolerance);
            }
            Ok(report.passed)
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}
