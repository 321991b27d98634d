//! End-to-end runs driven by an [`ExperimentConfig`], and their CSV output.
//!
//! Every run is deterministic given the config: parallel loops collect in
//! index order and sums are reduced sequentially.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{validate_estimates, EstimateProbe};
use crate::boltzmann::{
    evolve_offdiagonal_damped_with_sigma, evolve_with, write_series_csv, BoltzmannRun, CollisionOperator,
    PhaseSpaceDensity,
};
use crate::collision::{cross_section, phi_p, CrossSectionReport, Provenance};
use crate::config::ExperimentConfig;
use crate::dispersion::{validate_assumptions, DispersionModel, ValidationReport};
use crate::error::{Error, Result};
use crate::grid::Axis;
use crate::ladder::{resum_decoherence, residue_sweep, ResidueCheck, ResumTable};
use crate::observables::{corollary_limit_with_sigma, pair, pair_offdiagonal_free, XiProfile};
use crate::vector::{dot, norm, scale};
use crate::wavepacket::{free_evolve_offdiagonal, initial_wigner_hat, simulate_fringes, Component, FringeSweep, WavePacketSpec};

/// Formats a float with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// RFC-4180 CSV with a header row.
pub fn write_csv(out: impl Write, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_csv(std::io::BufWriter::new(file), header, rows)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// One (ε, T) cell of the decoherence experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecoherenceRow {
    pub epsilon: f64,
    pub big_t: f64,
    pub free_pairing: Complex64,
    pub damped_pairing: Complex64,
    /// damped/free; absent when the observable does not resolve the fringes
    /// or the free pairing vanishes.
    pub ratio: Option<Complex64>,
    /// e^{−Tσ_P}
    pub target: f64,
    pub ratio_error: Option<f64>,
    /// ε → 0 limit of the damped pairing.
    pub limit: Complex64,
}

/// The resummation route at one T.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResummationSummary {
    pub big_t: f64,
    pub k: usize,
    /// S_K / ⟨J, W_free⟩
    pub ratio: Complex64,
    /// e^{2T Im Φ_P}, the value the series sums to.
    pub target: f64,
    pub error: f64,
    /// |ratio − e^{−Tσ_shell}|, the gap to the damping computed from the
    /// energy-shell cross section instead of Φ_P.
    pub shell_gap: f64,
    pub table: ResumTable,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecoherenceBundle {
    /// −2 Im Φ_P
    pub sigma_p: f64,
    pub phi_p: Complex64,
    pub observable_resolves_fringes: bool,
    pub rows: Vec<DecoherenceRow>,
    pub resummation: Vec<ResummationSummary>,
    pub cross_section: CrossSectionReport,
    pub fringes: Option<FringeSweep>,
    /// Why the fringe sweep was skipped, if it was.
    pub fringe_note: Option<String>,
    pub provenance: Vec<Provenance>,
}

fn pairing_route(cfg: &ExperimentConfig, spec: &WavePacketSpec, model: &DispersionModel, big_t: f64, sigma: f64) -> Result<(Complex64, Complex64, &'static str)> {
    let j = cfg.observable.build(&spec.p)?;
    match j.xi_profile(spec.epsilon) {
        XiProfile::Dirac { .. } => {
            let w0 = initial_wigner_hat(spec, Component::PlusMinus, &cfg.run.grid)?;
            let free = free_evolve_offdiagonal(spec, model, big_t, &w0)?;
            let damped = evolve_offdiagonal_damped_with_sigma(&w0, spec, model, big_t, sigma)?;
            Ok((pair(&j, &free)?, pair(&j, &damped)?, "grid"))
        }
        XiProfile::Gaussian { .. } => {
            let free = pair_offdiagonal_free(&j, spec, model, big_t)?;
            Ok((free, free * (-big_t * sigma).exp(), "quadrature"))
        }
    }
}

/// Damped and free off-diagonal pairings for every ε and T, the resummation
/// route at every T, the cross-section report at P and, when the geometry
/// allows, the fringe sweep.
pub fn run_decoherence_experiment(cfg: &ExperimentConfig) -> Result<DecoherenceBundle> {
    cfg.validate()?;
    let model = cfg.model();
    let wp = &cfg.wavepacket;
    let cross = cross_section(&model, &wp.p, &cfg.run.eta_sequence, cfg.run.cross_section_tolerance)?;
    let phi = cross.phi_p;
    let sigma = cross.sigma_resolvent;
    let j = cfg.observable.build(&wp.p)?;
    let resolves = !j.is_fringe_blind();
    let times = cfg.times();

    let mut rows = Vec::new();
    let mut route = "grid";
    for &eps in &wp.epsilons {
        let spec = wp.spec(eps)?;
        for &t in &times {
            let (free, damped, r) = pairing_route(cfg, &spec, &model, t, sigma)?;
            route = r;
            let target = (-t * sigma).exp();
            let ratio = (resolves && free.norm() > 0.0).then(|| damped / free);
            rows.push(DecoherenceRow {
                epsilon: eps,
                big_t: t,
                free_pairing: free,
                damped_pairing: damped,
                ratio,
                target,
                ratio_error: ratio.map(|r| (r - target).norm()),
                limit: corollary_limit_with_sigma(&j, &spec, &model, t, sigma)?.value,
            });
        }
    }

    let eps_min = wp.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let spec = wp.spec(eps_min)?;
    let mut resummation = Vec::new();
    for &t in &times {
        let table = resum_decoherence(&spec, &model, t, cfg.run.k_max, &j, phi)?;
        let last = table.rows.last().expect("k_max + 1 rows");
        resummation.push(ResummationSummary {
            big_t: t,
            k: last.k,
            ratio: last.ratio,
            target: table.damping,
            error: last.error,
            shell_gap: (last.ratio - (-t * cross.sigma_shell).exp()).norm(),
            table,
        });
    }

    let (fringes, fringe_note) = if cfg.run.fringe_ratios.is_empty() {
        (None, Some("no fringe ratios configured".to_string()))
    } else {
        let (base, m1) = fringe_reduction(cfg, &model)?;
        (Some(simulate_fringes(&base, &m1, &wp.epsilons, &cfg.run.fringe_ratios)?), None)
    };

    let provenance = vec![
        Provenance {
            module: "boltzmann".into(),
            route: format!(
                "damped pairing: off-diagonal free evolution times exp(-T sigma_P), sigma_P = -2 Im Phi_P; pairing by {route}"
            ),
            settings: json!({ "grid": cfg.run.grid, "sigma_p": sigma }),
        },
        Provenance {
            module: "ladder".into(),
            route: "resummation: partial sums of the script-form series with Phi_P from the resolvent route".into(),
            settings: json!({ "k_max": cfg.run.k_max, "epsilon": eps_min }),
        },
        cross.provenance.clone(),
        Provenance {
            module: "wavepacket".into(),
            route: "fringes: FFT free evolution of the one-dimensional reduction along P, Richardson in epsilon".into(),
            settings: json!({ "ratios": cfg.run.fringe_ratios }),
        },
    ];

    Ok(DecoherenceBundle {
        sigma_p: sigma,
        phi_p: phi,
        observable_resolves_fringes: resolves,
        rows,
        resummation,
        cross_section: cross,
        fringes,
        fringe_note,
        provenance,
    })
}

/// With P ∥ Q and a product envelope the density factorizes into the
/// transverse profile (unit mass) times the one-dimensional two-bump density
/// along P̂, so the fringe coefficient at P̃ ∥ P is the one-dimensional one.
fn fringe_reduction(cfg: &ExperimentConfig, model: &DispersionModel) -> Result<(WavePacketSpec, DispersionModel)> {
    let wp = &cfg.wavepacket;
    if model.dim == 1 {
        return Ok((wp.spec(wp.epsilons[0])?, model.clone()));
    }
    let pn = norm(&wp.p);
    let along = dot(&wp.q, &wp.p) / pn;
    let spec = WavePacketSpec::new(wp.envelope, vec![pn], vec![along], wp.epsilons[0])?;
    Ok((spec, model.clone().with_dim(1)))
}

impl DecoherenceBundle {
    pub fn rows_csv(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let header = vec![
            "epsilon",
            "T",
            "free_re",
            "free_im",
            "damped_re",
            "damped_im",
            "ratio_re",
            "ratio_im",
            "target",
            "ratio_error",
            "limit_re",
            "limit_im",
        ];
        let opt = |x: Option<f64>| x.map(sig17).unwrap_or_default();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    sig17(r.epsilon),
                    sig17(r.big_t),
                    sig17(r.free_pairing.re),
                    sig17(r.free_pairing.im),
                    sig17(r.damped_pairing.re),
                    sig17(r.damped_pairing.im),
                    opt(r.ratio.map(|z| z.re)),
                    opt(r.ratio.map(|z| z.im)),
                    sig17(r.target),
                    opt(r.ratio_error),
                    sig17(r.limit.re),
                    sig17(r.limit.im),
                ]
            })
            .collect();
        (header, rows)
    }
}

pub fn fringe_csv(sweep: &FringeSweep) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let rows = sweep
        .samples
        .iter()
        .map(|s| vec![sig17(s.epsilon), sig17(s.ptilde_over_p), sig17(s.value.re), sig17(s.value.im)])
        .chain(sweep.limits.iter().map(|l| {
            vec![
                "0".to_string(),
                sig17(l.ptilde_over_p),
                sig17(l.extrapolated.re),
                sig17(l.extrapolated.im),
            ]
        }))
        .collect();
    (vec!["epsilon", "ptilde_over_p", "re", "im"], rows)
}

/// Free fringe sweep for the configured wave packet.
pub fn run_fringes(cfg: &ExperimentConfig) -> Result<FringeSweep> {
    cfg.validate()?;
    let model = cfg.model();
    let (base, m1) = fringe_reduction(cfg, &model)?;
    simulate_fringes(&base, &m1, &cfg.wavepacket.epsilons, &cfg.run.fringe_ratios)
}

/// Cross-section reports at the configured |P| values along P̂.
pub fn run_cross_sections(cfg: &ExperimentConfig) -> Result<Vec<CrossSectionReport>> {
    cfg.validate()?;
    let model = cfg.model();
    let dir = scale(&cfg.wavepacket.p, 1.0 / norm(&cfg.wavepacket.p));
    cfg.run
        .cross_section_momenta
        .iter()
        .map(|&a| {
            cross_section(
                &model,
                &scale(&dir, a),
                &cfg.run.eta_sequence,
                cfg.run.cross_section_tolerance * cfg.run.tolerance_scale,
            )
        })
        .collect()
}

/// Residue sweep and resummation tables at every configured T.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LadderReport {
    pub residue: Vec<ResidueCheck>,
    pub resummation: Vec<ResumTable>,
}

pub fn run_ladder(cfg: &ExperimentConfig) -> Result<LadderReport> {
    cfg.validate()?;
    let model = cfg.model();
    let r = &cfg.run.residue;
    let residue = residue_sweep(r.level, r.max_m, &r.times, &r.etas)?;
    let phi = if model.is_decoupled() {
        Complex64::new(0.0, 0.0)
    } else {
        phi_p(&model, &cfg.wavepacket.p, &cfg.run.eta_sequence)?.value
    };
    let eps_min = cfg.wavepacket.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let spec = cfg.wavepacket.spec(eps_min)?;
    let j = cfg.observable.build(&spec.p)?;
    let resummation = cfg
        .times()
        .iter()
        .map(|&t| resum_decoherence(&spec, &model, t, cfg.run.k_max, &j, phi))
        .collect::<Result<_>>()?;
    Ok(LadderReport { residue, resummation })
}

/// Homogeneous relaxation of a Gaussian in V on [−v_max, v_max]^d.
pub fn run_boltzmann(cfg: &ExperimentConfig) -> Result<BoltzmannRun> {
    cfg.validate()?;
    let model = cfg.model();
    let b = &cfg.run.boltzmann;
    if b.n_v < 2 {
        return Err(Error::InvalidInput("run.boltzmann.n_v must be at least 2".into()));
    }
    let h = 2.0 * b.v_max / (b.n_v - 1) as f64;
    let axes = vec![Axis::new(-b.v_max, h, b.n_v); model.dim];
    let f0 = PhaseSpaceDensity::homogeneous(axes.clone(), |v| {
        let r2: f64 = v.iter().zip(&b.center).map(|(x, c)| (x - c) * (x - c)).sum();
        (-r2 / (2.0 * b.std * b.std)).exp()
    })?;
    let op = CollisionOperator::new(&model, &axes, b.rule)?;
    evolve_with(&f0, &model, &op, b.big_t, b.dt, b.variant)
}

/// Everything of a Boltzmann run except the final density.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoltzmannSummary {
    pub steps: usize,
    pub dt: f64,
    pub clipped: usize,
    pub most_negative: f64,
    pub clipped_mass: f64,
    pub series: Vec<crate::boltzmann::Diagnostics>,
}

impl From<&BoltzmannRun> for BoltzmannSummary {
    fn from(r: &BoltzmannRun) -> Self {
        BoltzmannSummary {
            steps: r.steps,
            dt: r.dt,
            clipped: r.clipped,
            most_negative: r.most_negative,
            clipped_mass: r.clipped_mass,
            series: r.series.clone(),
        }
    }
}

pub fn boltzmann_series_csv(run: &BoltzmannRun) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_series_csv(&run.series, &mut out)?;
    Ok(out)
}

/// One entry of the aggregate validation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    /// None when skipped.
    pub passed: Option<bool>,
    pub value: f64,
    pub tolerance: f64,
    pub detail: serde_json::Value,
}

impl CheckOutcome {
    fn skipped(name: &str, why: &str) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed: None,
            value: f64::NAN,
            tolerance: f64::NAN,
            detail: json!(why),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AggregateReport {
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl AggregateReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.passed != Some(true))
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Dispersion validation first; if it fails every other check is skipped.
/// Then the estimate probes (d = 3 only), the residue identity, the
/// cross-section gate and the resummation at the overlap time. Tolerances of
/// the last three are multiplied by `run.tolerance_scale`.
pub fn run_all_validations(cfg: &ExperimentConfig) -> Result<AggregateReport> {
    cfg.validate()?;
    let model = cfg.model();
    let scale_tol = cfg.run.tolerance_scale;
    let mut checks = Vec::new();

    let report: ValidationReport = validate_assumptions(&model, &cfg.run.validation);
    let failures = report.failures().count();
    checks.push(CheckOutcome {
        name: "dispersion".into(),
        passed: Some(report.passed),
        value: failures as f64,
        tolerance: 0.0,
        detail: to_json(&report),
    });
    let later = ["estimates", "residue", "cross-section", "resummation"];
    if !report.passed {
        checks.extend(later.iter().map(|n| CheckOutcome::skipped(n, "dispersion validation failed")));
        return Ok(AggregateReport { checks, passed: false });
    }

    if model.dim == 3 {
        let mut lattice = cfg.run.estimates.clone();
        if let Some(seed) = cfg.run.seed {
            lattice.seed = seed;
        }
        let probes: Vec<EstimateProbe> = validate_estimates(&model, &lattice)?;
        for p in probes {
            checks.push(CheckOutcome {
                name: format!("estimates:{}", p.id),
                passed: Some(p.passed),
                value: p.refinement_change,
                tolerance: 0.1,
                detail: to_json(&p),
            });
        }
    } else {
        checks.push(CheckOutcome::skipped("estimates", "estimate probes are three-dimensional"));
    }

    let r = &cfg.run.residue;
    let sweep = residue_sweep(r.level, r.max_m, &r.times, &r.etas)?;
    let worst = sweep.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    let tol = r.tolerance * scale_tol;
    checks.push(CheckOutcome {
        name: "residue".into(),
        passed: Some(worst < tol),
        value: worst,
        tolerance: tol,
        detail: to_json(&sweep),
    });

    let reports = run_cross_sections(cfg)?;
    let worst = reports.iter().map(|c| c.relative_gap).fold(0.0, f64::max);
    let tol = cfg.run.cross_section_tolerance * scale_tol;
    checks.push(CheckOutcome {
        name: "cross-section".into(),
        passed: Some(worst < tol),
        value: worst,
        tolerance: tol,
        detail: to_json(&reports),
    });

    let phi = if model.is_decoupled() {
        Complex64::new(0.0, 0.0)
    } else {
        phi_p(&model, &cfg.wavepacket.p, &cfg.run.eta_sequence)?.value
    };
    let eps_min = cfg.wavepacket.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let spec = cfg.wavepacket.spec(eps_min)?;
    let j = cfg.observable.build(&spec.p)?;
    let table = resum_decoherence(&spec, &model, cfg.wavepacket.overlap_time(), cfg.run.k_max, &j, phi)?;
    let err = table.rows.last().map_or(f64::NAN, |r| r.error);
    let tol = cfg.run.resum_tolerance * scale_tol;
    checks.push(CheckOutcome {
        name: "resummation".into(),
        passed: Some(err < tol),
        value: err,
        tolerance: tol,
        detail: to_json(&table),
    });

    let passed = checks.iter().all(|c| c.passed == Some(true) || c.passed.is_none() && c.name == "estimates");
    Ok(AggregateReport { checks, passed })
}
