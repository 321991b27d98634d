use decoherence_core::analysis::EstimateLattice;
use decoherence_core::config::{ExperimentConfig, ObservableConfig, SCHEMA_VERSION};
use decoherence_core::experiment::{
    run_all_validations, run_decoherence_experiment, run_fringes, write_csv, DecoherenceBundle,
};
use decoherence_core::{Error, RadialProfile};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.wavepacket.epsilons = vec![0.2, 0.1];
    cfg.run.times = vec![0.25, 0.5];
    cfg.run.fringe_ratios = vec![0.0, 1.0];
    cfg
}

fn tiny_lattice() -> EstimateLattice {
    EstimateLattice {
        p_norms: vec![1.0],
        thetas: vec![0.0, 1.0, 2.0],
        etas: vec![1.0, 0.1],
        orders: vec![1],
        pair_bases: vec![0.0],
        separations: vec![0.1, 1.0],
        pair_thetas: vec![2.5],
        theta_decades: vec![1.0, 10.0],
        levels: vec![0.0, 1.0],
        alphas: vec![0.0, 1.0],
        v_norms: vec![1.0],
        upsilon_etas: vec![0.1, 0.03],
        deltas: vec![0.1, 0.05],
        radii: vec![0.5],
        samples: 20_000,
        ..EstimateLattice::default()
    }
}

#[test]
fn empty_object_is_the_default_config() {
    let cfg = ExperimentConfig::from_json(&format!("{{\"schema_version\": {SCHEMA_VERSION}}}")).unwrap();
    let def = ExperimentConfig::default();
    assert_eq!(cfg.to_json(), def.to_json());
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        r#"{"schema_version": 1, "bogus": 1}"#,
        r#"{"schema_version": 1, "run": {"k_maximum": 3}}"#,
        r#"{"schema_version": 1, "model": {"dimension": 3}}"#,
        r#"{"schema_version": 1, "observable": {"preset": "fringe", "x": 1}}"#,
    ] {
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::InvalidInput(_))), "{text}");
    }
}

#[test]
fn schema_version_is_checked() {
    assert!(ExperimentConfig::from_json(r#"{"schema_version": 99}"#).is_err());
    assert!(ExperimentConfig::from_json("{}").is_err());
}

#[test]
fn inconsistent_dimensions_are_rejected() {
    let text = r#"{"schema_version": 1, "wavepacket": {"p": [1.0, 0.0]}}"#;
    assert!(ExperimentConfig::from_json(text).is_err());
}

#[test]
fn seed_is_required_for_monte_carlo() {
    let mut cfg = ExperimentConfig::default();
    assert!(cfg.require_seed().is_err());
    cfg.run.seed = Some(3);
    assert_eq!(cfg.require_seed().unwrap(), 3);
}

#[test]
fn config_roundtrips_through_json() {
    let mut cfg = small();
    cfg.observable = ObservableConfig::Windowed { window: 2.0, v_width: Some(0.5) };
    cfg.run.seed = Some(11);
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back.to_json(), cfg.to_json());
}

#[test]
fn decoherence_bundle_tracks_the_damping() {
    let b = run_decoherence_experiment(&small()).unwrap();
    assert!(b.observable_resolves_fringes);
    assert_eq!(b.rows.len(), 4);
    for r in &b.rows {
        let ratio = r.ratio.expect("fringe observable resolves");
        assert!((ratio.re - r.target).abs() < 1e-6 && ratio.im.abs() < 1e-6, "{r:?}");
    }
    for s in &b.resummation {
        assert!(s.error < 1e-8, "{:?}", (s.big_t, s.error));
        assert!(s.shell_gap < 1e-4);
    }
    assert!(b.fringes.is_some());
    assert!(b.cross_section.passed);
}

#[test]
fn blind_observable_has_no_ratio() {
    let mut cfg = small();
    cfg.observable = ObservableConfig::Blind { width: 0.5 };
    let b = run_decoherence_experiment(&cfg).unwrap();
    assert!(!b.observable_resolves_fringes);
    assert!(b.rows.iter().all(|r| r.ratio.is_none()));
}

#[test]
fn skew_geometry_is_a_config_error() {
    let text = r#"{"schema_version": 1, "wavepacket": {"q": [1.0, 0.0, 1.0]}}"#;
    assert!(ExperimentConfig::from_json(text).is_err());
}

#[test]
fn fringe_sweep_reduces_to_one_dimension() {
    let sweep = run_fringes(&small()).unwrap();
    let at = |r: f64| sweep.limits.iter().find(|l| l.ptilde_over_p == r).unwrap().extrapolated;
    assert!((at(0.0).re - 2.0).abs() < 2e-2);
    assert!((at(1.0).norm() - 1.0).abs() < 2e-2);
}

#[test]
fn bundle_serializes_losslessly() {
    let b = run_decoherence_experiment(&small()).unwrap();
    let text = serde_json::to_string(&b).unwrap();
    let back: DecoherenceBundle = serde_json::from_str(&text).unwrap();
    assert_eq!(back, b);
}

#[test]
fn csv_quotes_fields() {
    let mut out = Vec::new();
    write_csv(&mut out, &["a", "b"], &[vec!["1,5".into(), "x\"y".into()]]).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "a,b\n\"1,5\",\"x\"\"y\"\n");
}

#[test]
fn failed_dispersion_gate_skips_the_rest() {
    let mut cfg = small();
    cfg.model.form_factor = RadialProfile::Constant { value: 1.0 };
    let r = run_all_validations(&cfg).unwrap();
    assert!(!r.passed);
    assert_eq!(r.checks[0].passed, Some(false));
    assert_eq!(r.checks.len(), 5);
    assert!(r.checks[1..].iter().all(|c| c.passed.is_none()));
}

#[test]
fn aggregate_validation_is_deterministic() {
    let mut cfg = small();
    cfg.run.estimates = tiny_lattice();
    cfg.run.seed = Some(5);
    let a = run_all_validations(&cfg).unwrap();
    let b = run_all_validations(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.checks[0].name, "dispersion");
    assert_eq!(a.check("dispersion").unwrap().passed, Some(true));
    assert_eq!(a.check("residue").unwrap().passed, Some(true));
    assert_eq!(a.check("cross-section").unwrap().passed, Some(true));
}

