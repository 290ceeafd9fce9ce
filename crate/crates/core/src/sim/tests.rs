use super::*;

fn source(n: usize, f: usize) -> TimeSeriesTable {
    let ts = (0..n).map(|i| i as f64 * 300.0).collect();
    let names = (0..f).map(|j| format!("s{j}")).collect();
    // Row r holds r in every column, so windows reveal their rows.
    let values = (0..n * f).map(|i| (i / f) as f64).collect();
    TimeSeriesTable::new(ts, names, values).unwrap()
}

fn config(horizon: usize, d_s: usize, d_a: usize) -> SimConfig {
    SimConfig {
        horizon,
        d_s,
        d_a,
        command_map: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        ..SimConfig::default()
    }
}

// Class follows the newest row: a new class on every delivered reading.
fn by_row() -> FnController<impl FnMut(&[f64]) -> Result<usize, String>> {
    FnController(|w: &[f64]| Ok(*w.last().unwrap() as usize % 4))
}

#[test]
fn zero_command_costs_nothing() {
    let cfg = config(10, 0, 0);
    let trace = run(&cfg, &mut ConstantController(0), &source(20, 3), 4).unwrap();
    assert_eq!(trace.total_energy, 0.0);
}

#[test]
fn constant_command_energy() {
    let cfg = SimConfig { cost: vec![1.0, 2.0], ..config(3, 0, 0) };
    let trace = run(&cfg, &mut ConstantController(3), &source(10, 2), 2).unwrap();
    assert_eq!(trace.total_energy, 9.0);
    assert_eq!(trace.steps.iter().map(|s| s.energy).sum::<f64>(), trace.total_energy);
}

#[test]
fn hand_energy_and_scaling() {
    let u = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
    assert_eq!(energy_cost(&u, &[1.0, 3.0]).unwrap(), 13.0);
    let doubled: Vec<Vec<f64>> = u.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
    assert_eq!(energy_cost(&doubled, &[1.0, 3.0]).unwrap(), 52.0);
    assert_eq!(energy_cost(&[vec![0.0, 0.0]], &[1.0, 3.0]).unwrap(), 0.0);
    assert!(matches!(energy_cost(&u, &[1.0]), Err(SimError::CostLength { cost: 1, actuators: 2 })));
}

#[test]
fn actuation_delay_is_exact() {
    let trace = run(&config(30, 0, 2), &mut by_row(), &source(40, 2), 3).unwrap();
    for s in &trace.steps {
        if s.t < 2 {
            assert_eq!(s.applied_from, None);
            assert_eq!(s.applied, vec![0.0, 0.0]);
        } else {
            assert_eq!(s.applied_from, Some(s.t - 2));
            assert_eq!(s.applied_class, Some(trace.steps[s.t - 2].class));
        }
    }
}

#[test]
fn gateway_never_sees_undelivered_readings() {
    let (w, d_s) = (4, 3);
    let src = source(60, 2);
    let mut seen = Vec::new();
    let mut check = FnController(|win: &[f64]| {
        let rows: Vec<f64> = win.chunks(2).map(|r| r[0]).collect();
        seen.push(rows.clone());
        Ok(0)
    });
    let trace = run(&config(40, d_s, 1), &mut check, &src, w).unwrap();
    for (s, rows) in trace.steps.iter().zip(&seen) {
        let limit = if s.t >= d_s { w + s.t - d_s } else { w - 1 };
        assert_eq!(s.newest_row, limit);
        assert_eq!(*rows.last().unwrap() as usize, limit);
        assert_eq!(rows.len(), w);
        assert!(rows.windows(2).all(|p| p[1] == p[0] + 1.0));
    }
}

#[test]
fn applied_changes_match_issued_changes_without_drops() {
    for (d_s, d_a) in [(0, 0), (1, 2), (3, 1)] {
        let trace = run(&config(50, d_s, d_a), &mut by_row(), &source(70, 2), 5).unwrap();
        assert!(trace.issued_changes() > 0);
        assert_eq!(trace.applied_changes(), trace.issued_changes());
    }
}

#[test]
fn dropped_commands_hold_the_last_one() {
    let cfg = SimConfig { drop_prob: 0.4, seed: 3, ..config(200, 1, 1) };
    let trace = run(&cfg, &mut by_row(), &source(220, 2), 3).unwrap();
    assert!(trace.steps.iter().any(|s| s.command_dropped) && trace.steps.iter().any(|s| s.sensor_dropped));
    for p in trace.steps.windows(2) {
        let arrived = !p[0].command_dropped;
        if arrived {
            assert_eq!(p[1].applied_from, Some(p[0].t));
        } else {
            assert_eq!(p[1].applied_from, p[0].applied_from);
        }
    }
    for s in trace.steps.iter().filter(|s| s.sensor_dropped) {
        assert_eq!(s.delivered_at, None);
    }
}

#[test]
fn same_seed_same_trace() {
    let cfg = SimConfig { drop_prob: 0.2, noise_std: 0.5, seed: 11, ..config(60, 2, 1) };
    let a = run(&cfg, &mut by_row(), &source(80, 3), 4).unwrap();
    let b = run(&cfg, &mut by_row(), &source(80, 3), 4).unwrap();
    assert_eq!(a, b);
    let c = run(&SimConfig { seed: 12, ..cfg }, &mut by_row(), &source(80, 3), 4).unwrap();
    assert_ne!(a, c);
}

#[test]
fn invalid_settings_are_rejected() {
    let src = source(20, 2);
    assert!(run(&config(3, 2, 1), &mut ConstantController(0), &src, 2).is_err());
    assert!(run(&config(18, 0, 0), &mut ConstantController(0), &src, 4).is_err());
    assert!(run(&SimConfig { drop_prob: 1.0, ..config(5, 0, 0) }, &mut ConstantController(0), &src, 2).is_err());
    assert!(run(&SimConfig { cost: vec![1.0, 0.0], ..config(5, 0, 0) }, &mut ConstantController(0), &src, 2).is_err());
    let e = run(&config(5, 0, 0), &mut ConstantController(9), &src, 2).unwrap_err();
    assert!(matches!(e, SimError::Controller { step: 0, .. }));
    let mut failing = FnController(|w: &[f64]| if w[w.len() - 1] >= 5.0 { Err("boom".to_string()) } else { Ok(0) });
    let e = run(&config(10, 0, 0), &mut failing, &src, 2).unwrap_err();
    assert!(matches!(e, SimError::Controller { step: 3, .. }), "{e}");
}

#[test]
fn policy_comparison() {
    let src = source(60, 2);
    let labels: Vec<usize> = (0..60).map(|r| r % 4).collect();
    let cfg = config(40, 0, 1);
    let mut controllers: Vec<(String, Box<dyn Controller>)> = vec![
        ("replay".into(), Box::new(ReplayController { labels: labels.clone() })),
        ("rows".into(), Box::new(by_row())),
        ("idle".into(), Box::new(ConstantController(0))),
        ("full".into(), Box::new(ConstantController(3))),
    ];
    let (report, traces) = compare_policies(&cfg, &mut controllers, &src, 5, Some(&labels)).unwrap();
    assert_eq!(report.rows[0].name, "idle");
    assert_eq!(report.rows[0].total_energy, 0.0);
    let get = |n: &str| report.rows.iter().find(|r| r.name == n).unwrap().clone();
    assert_eq!(get("replay").total_energy, get("rows").total_energy);
    assert_eq!(get("replay").agreement, Some(1.0));
    assert_eq!(traces.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("policies.csv")).unwrap();
    assert!(csv.starts_with("rank,name,total_energy,agreement\n1,idle,0,"));
}

#[test]
fn trace_files() {
    let trace = run(&config(6, 1, 1), &mut by_row(), &source(10, 2), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().next().unwrap().ends_with("energy,u_0,u_1"));
    let s = trace.summary();
    assert_eq!(s.horizon, 6);
    assert_eq!(s.class_counts.values().sum::<usize>(), 6);
    let cfg_path = dir.path().join("sim.json");
    std::fs::write(&cfg_path, serde_json::to_string(&trace.config).unwrap()).unwrap();
    assert_eq!(SimConfig::load(&cfg_path).unwrap(), trace.config);
}
