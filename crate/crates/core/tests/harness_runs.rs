use gaussprobe::harness::{run, to_csv_string, ExperimentConfig, MethodSpec, Param, TaskKind, CSV_HEADER};

fn parse(text: &str) -> ExperimentConfig {
    text.parse().unwrap()
}

#[test]
fn coherent_phase_sweep_matches_closed_form() {
    let cfg = parse("task = phase_het\nn = 0.5, 1, 2\nr = 0\n");
    for r in run(&cfg) {
        let want = (1.0 - (-r.n).exp()) / (2.0 * r.n);
        assert!((r.avg_variance.unwrap() - want).abs() < 1e-14 * want);
        assert_eq!(r.std_error, Some(0.0));
    }
}

#[test]
fn repeated_homodyne_sweep() {
    let cfg = parse("task = displacement_hom\nm_rounds = 1:5:5\nsigma0sq = 1\nr = 0\n");
    let got: Vec<f64> = run(&cfg).iter().map(|r| r.avg_variance.unwrap()).collect();
    for (g, k) in got.iter().zip([5.0, 9.0, 13.0, 17.0, 21.0]) {
        assert!((g - 1.0 / k).abs() < 1e-16, "{g} vs 1/{k}");
    }
}

#[test]
fn monte_carlo_runs_are_reproducible() {
    let text =
        "task = phase_het\nn = 0.5, 2\nr = 0, 0.3\nmethod = mc\nsamples = 2000\nseed = 99\nforce_both_paths = true\n";
    let a = to_csv_string(&run(&parse(text)));
    let b = to_csv_string(&run(&parse(text)));
    assert_eq!(a, b);
    let other = to_csv_string(&run(&parse(&text.replace("seed = 99", "seed = 100"))));
    assert_ne!(a, other);
    assert_eq!(a.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn closed_forms_agree_with_the_engine() {
    for text in [
        "task = displacement_het\nsigma0sq = 0.25, 2\nr = 0, 0.4\nforce_both_paths = true\n",
        "task = displacement_hom\nsigma0sq = 0.5\nr = 0.3\npsi = 0, 1.2\nm_rounds = 1, 4\nforce_both_paths = true\n",
        "task = phase_het\nalpha = 1\nr = 0, 0.25\nforce_both_paths = true\n",
    ] {
        for r in run(&parse(text)) {
            assert_eq!(r.status, "ok", "{r:?}");
            assert!(r.check_value.is_some());
        }
    }
}

#[test]
fn engine_only_tasks_and_energy_constraint() {
    let mut cfg = ExperimentConfig::new(TaskKind::Squeeze).with(Param::N, &[2.0]).with(Param::S, &[0.0, 1.0, 1.5]);
    cfg.set(Param::Mu0, vec![-0.5]);
    let rows = run(&cfg);
    assert_eq!(rows[0].method, "quadrature");
    assert!(rows[1].avg_variance.unwrap() < rows[0].avg_variance.unwrap());
    assert!(rows[2].status.starts_with("infeasible"));
    let text = to_csv_string(&rows);
    assert!(text.lines().nth(3).unwrap().contains("infeasible"));

    let mut hom = ExperimentConfig::new(TaskKind::PhaseHom).with(Param::Alpha, &[0.0]);
    hom.method = MethodSpec::Quadrature;
    let v = run(&hom)[0].avg_variance.unwrap();
    assert!((v - 0.5).abs() < 1e-6);
}

#[test]
fn config_errors_name_the_line() {
    let e = "task = phase_het\nn = 1\nmethod = montecarlo\n".parse::<ExperimentConfig>().unwrap_err();
    assert!(e.message.contains("seed"));
    let e = "task = phase_het\nn = 1\nr = 1:2:x\n".parse::<ExperimentConfig>().unwrap_err();
    assert_eq!(e.line, 3);
    assert!(e.to_string().starts_with("line 3:"));
}
