use keygraph_lab::harness::{sweep_rows, ExperimentConfig, Mode, SweepRow};

fn sweep(c: f64, trials: u64) -> Vec<SweepRow> {
    let cfg = ExperimentConfig {
        mode: Mode::Sweep,
        n: vec![200, 800, 3200],
        k: Some(4),
        alpha: Some(1.0),
        c: Some(c),
        seed: 42,
        ..Default::default()
    };
    sweep_rows(&cfg.schedule().unwrap(), trials, cfg.seed, 0)
}

// With 2000 trials the true frequencies (≈ 0.996, 0.999, 0.9997) differ by
// less than one MC standard error, so a literal row-to-row ordering is a coin
// flip. The trend is asserted up to sampling error, and exactly on the bound.
#[test]
fn one_law_frequency_trends_up() {
    let rows = sweep(2.0, 2000);
    for w in rows.windows(2) {
        assert!(w[1].lower_bound_P0 > w[0].lower_bound_P0);
        let (f0, f1) = (w[0].mc_freq_I0.unwrap(), w[1].mc_freq_I0.unwrap());
        let (s0, s1) = (w[0].mc_stderr_I0.unwrap(), w[1].mc_stderr_I0.unwrap());
        // Floor the error at one event in 2000 so an all-success row is not exact.
        let se = (s0 * s0 + s1 * s1).sqrt().max(1.0 / 2000.0);
        assert!(
            f1 >= f0 - 4.0 * se,
            "n={} -> {}: {f0} -> {f1}",
            w[0].n,
            w[1].n
        );
    }
    let first = rows[0].mc_freq_I0.unwrap();
    let last = rows[2].mc_freq_I0.unwrap();
    assert!(last >= first, "{first} -> {last}");
}

#[test]
fn zero_law_bound_and_frequency() {
    let rows = sweep(0.5, 2000);
    for w in rows.windows(2) {
        assert!(w[1].upper_bound_P0 < w[0].upper_bound_P0);
    }
    let last = &rows[2];
    assert!(last.upper_bound_P0 < 0.15);
    assert!(last.mc_freq_I0.unwrap() <= last.upper_bound_P0 + 4.0 * last.mc_stderr_I0.unwrap());
}

#[test]
fn schedule_hits_strong_scaling_targets() {
    for c in [0.5, 2.0] {
        for r in sweep(c, 0) {
            assert!((r.c_equiv - c).abs() / c < 0.1, "c={c}: {r:?}");
            assert!(r.mc_freq_I0.is_none());
        }
    }
}
