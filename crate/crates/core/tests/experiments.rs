use shadowlab::experiments::*;
use shadowlab::Error;

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(kind);
    c.n_samples = 24;
    c.n_draws = 12;
    c.bootstrap = 20;
    c
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn kinds_parse_by_name() {
    for k in ExperimentKind::ALL {
        assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
    }
    assert!(matches!(
        "crossing".parse::<ExperimentKind>(),
        Err(Error::Config(_))
    ));
}

#[test]
fn config_round_trips_and_rejects_unknown_fields() {
    let c = ExperimentConfig::preset(ExperimentKind::ChemicalScaling);
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
    let bad = text.replacen("\"n_samples\"", "\"n_sample\"", 1);
    assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
    let minimal =
        r#"{"kernel": {"family": "gaussian"}, "grid": {"h": 0.25}, "n_samples": 3, "seed": 4}"#;
    let m: ExperimentConfig = serde_json::from_str(minimal).unwrap();
    assert_eq!(m.geometry.epsilon, 0.5);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small(ExperimentKind::CrossingDecay);
    c.n_samples = 0;
    assert!(matches!(
        run(ExperimentKind::CrossingDecay, &c),
        Err(Error::Config(_))
    ));
    let mut c = small(ExperimentKind::CrossingDecay);
    c.levels = vec![f64::NAN];
    assert!(matches!(
        run(ExperimentKind::CrossingDecay, &c),
        Err(Error::Config(_))
    ));
    c.levels = vec![0.5, 0.9];
    assert!(matches!(
        run(ExperimentKind::CrossingDecay, &c),
        Err(Error::Config(_))
    ));
    let mut c = small(ExperimentKind::TruncationStudy);
    c.geometry.radii = vec![8.0, 4.0];
    assert!(matches!(
        run(ExperimentKind::TruncationStudy, &c),
        Err(Error::Config(_))
    ));
}

#[test]
fn crossing_decay_rows_follow_the_sweep() {
    let mut c = small(ExperimentKind::CrossingDecay);
    c.geometry.lambdas = vec![1.0, 2.0, 4.0];
    c.levels = vec![1e9];
    let r = run(ExperimentKind::CrossingDecay, &c).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert!(r.column("one_minus_p").unwrap().iter().all(|&q| q == 0.0));
    assert!(r.rows.iter().all(|row| row.seed == c.seed));
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("seed,lambda,level,n,failures,one_minus_p,ci_lo,ci_hi"));
}

#[test]
fn crossing_failures_do_not_grow_with_level() {
    let mut c = small(ExperimentKind::CrossingDecay);
    c.geometry.lambdas = vec![2.0];
    let mut prev = f64::INFINITY;
    for level in [0.4, 0.6, 0.8, 1.2] {
        c.levels = vec![level];
        let q = run(ExperimentKind::CrossingDecay, &c)
            .unwrap()
            .column("one_minus_p")
            .unwrap()[0];
        assert!(q <= prev);
        prev = q;
    }
}

#[test]
fn chemical_ratios_are_at_least_one() {
    let mut c = small(ExperimentKind::ChemicalScaling);
    c.geometry.z_cells = vec![8, 16];
    c.levels = vec![0.8, 1.2];
    let r = run(ExperimentKind::ChemicalScaling, &c).unwrap();
    assert_eq!(r.rows.len(), 4);
    for row in &r.rows {
        let med = row.values[r.columns.iter().position(|c| c == "median_ratio").unwrap()];
        assert!(med.is_nan() || med >= 1.0);
    }
    // coupled levels: the higher level connects at least as often
    let conn = r.column("connected").unwrap();
    assert!(conn[1] >= conn[0] && conn[3] >= conn[2]);
}

#[test]
fn global_structure_success_grows_with_level() {
    let mut c = small(ExperimentKind::GlobalStructure);
    c.geometry.z_cells = vec![16];
    c.levels = vec![0.6, 0.9, 1e9];
    let r = run(ExperimentKind::GlobalStructure, &c).unwrap();
    let found = r.column("found").unwrap();
    assert!(found[0] <= found[1] && found[1] <= found[2]);
    assert_eq!(found[2], c.n_samples as f64);
    // at an infinite level the straight segment is open
    assert!(r.column("median_ratio").unwrap()[2] <= 1.0);
}

#[test]
fn truncation_vanishes_beyond_the_window() {
    let mut c = small(ExperimentKind::TruncationStudy);
    c.grid.h = 0.25;
    c.grid.margin_level = 0.6;
    let (_, margin) = margin_report(&c).unwrap();
    // the cutoff is the identity within a quarter of the radius
    let support = c.kernel.build().unwrap().trunc_radius();
    let reach = ((margin + 5) as f64 * c.grid.h + 1.0).max(4.0 * support + 1.0);
    c.geometry.radii = vec![4.0, reach];
    let r = run(ExperimentKind::TruncationStudy, &c).unwrap();
    let sup = r.column("max_sup").unwrap();
    assert!(sup[0] > 0.0);
    assert_eq!(sup[1], 0.0);
}

#[test]
fn lipschitz_probe_reports_every_sample() {
    let mut c = small(ExperimentKind::LipschitzProbe);
    c.grid.h = 0.1;
    c.n_samples = 8;
    let r = run(ExperimentKind::LipschitzProbe, &c).unwrap();
    assert_eq!(r.rows.len(), 8);
    assert!(r.column("hessian_bound").unwrap().iter().all(|&m| m > 0.0));
}

#[test]
fn critical_level_is_positive() {
    let mut c = small(ExperimentKind::CriticalLevel);
    c.geometry.square_side = 8.0;
    c.geometry.tol = 0.05;
    let r = run(ExperimentKind::CriticalLevel, &c).unwrap();
    assert!(r.summary["estimate"] > 0.0);
    assert!(r.summary["bracket_width"] <= 0.05);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut c = small(ExperimentKind::ChemicalScaling);
    c.geometry.z_cells = vec![8];
    let a = in_pool(1, || run(ExperimentKind::ChemicalScaling, &c).unwrap());
    let b = in_pool(3, || run(ExperimentKind::ChemicalScaling, &c).unwrap());
    assert!(a.same_tables(&b));
    let mut k = small(ExperimentKind::KacRice);
    k.geometry.box_side = 1.0;
    k.geometry.ray_window = 5.0;
    let a = in_pool(1, || run(ExperimentKind::KacRice, &k).unwrap());
    let b = in_pool(4, || run(ExperimentKind::KacRice, &k).unwrap());
    assert!(a.same_tables(&b));
}
