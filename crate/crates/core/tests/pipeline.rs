use ark_knockoffs::harness::{run_simulation, SimConfig, Simulation, WorkingModelKind};

fn desk(n_signals: usize, reps: usize) -> SimConfig {
    let mut c = SimConfig::preset("setting1-desk").unwrap();
    c.n = 200;
    c.p = 60;
    c.n_signals = Some(n_signals);
    c.replications = reps;
    c
}

#[test]
fn global_null_fdr_is_controlled() {
    // the finite-sample guarantee needs the +1 offset; without it any positive top W is a false discovery
    let mut c = desk(0, 200);
    c.offset = 1;
    let r = run_simulation(c, None).unwrap();
    assert_eq!(r.completed, 200);
    assert!(r.fdr <= 0.25, "mean FDP {} under the global null", r.fdr);
    assert_eq!(r.power, 0.0);
}

#[test]
fn replications_are_reproducible() {
    let sim = Simulation::new(desk(8, 3)).unwrap();
    let a = sim.run_replication(2).unwrap();
    let b = Simulation::new(desk(8, 3)).unwrap().run_replication(2).unwrap();
    assert_eq!(a, b);
    let mut other = desk(8, 3);
    other.seed += 1;
    let c = Simulation::new(other).unwrap().run_replication(2).unwrap();
    assert_ne!(a.threshold, c.threshold);
}

#[test]
fn oracle_covariance_controls_fdr() {
    let mut c = desk(12, 100);
    c.n = 250;
    c.p = 100;
    c.working_model = Some(WorkingModelKind::Oracle);
    c.offset = 1;
    let r = run_simulation(c, None).unwrap();
    assert!(r.fdr <= r.config.q + 2.0 * r.fdr_mcse, "fdr {} mcse {}", r.fdr, r.fdr_mcse);
}

#[test]
fn report_aggregates_match_rows() {
    let mut c = desk(8, 12);
    c.kfwer = Some(ark_knockoffs::harness::KfwerConfig { k: 2, q: 0.2 });
    let r = run_simulation(c, Some(2)).unwrap();
    let m = r.rows.len() as f64;
    assert_eq!(r.fdr, r.rows.iter().map(|x| x.fdp).sum::<f64>() / m);
    assert_eq!(r.power, r.rows.iter().map(|x| x.power).sum::<f64>() / m);
    let hits = r.rows.iter().filter(|x| x.kfwer_false_discoveries.unwrap() >= 2).count() as f64;
    assert_eq!(r.kfwer.unwrap(), hits / m);
    let reps: Vec<usize> = r.rows.iter().map(|x| x.rep).collect();
    assert_eq!(reps, (0..12).collect::<Vec<_>>());
}

#[test]
fn logistic_and_t_settings_run_end_to_end() {
    for preset in ["setting2-desk", "t-logistic-desk", "t-linear-desk"] {
        let mut c = SimConfig::preset(preset).unwrap();
        c.replications = 3;
        let r = run_simulation(c, None).unwrap();
        assert_eq!(r.completed, 3, "{preset}");
        assert!(r.max_kkt <= 1e-6, "{preset}: {}", r.max_kkt);
    }
}
