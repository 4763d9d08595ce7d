// Scaled-down end-to-end exercise of the ensemble campaign code paths.
use coldscatter::config::{validate_config, Geometry, PhysParams, RunPlan};
use coldscatter::montecarlo::{instantaneous_rate, run_decay, run_transmission, Propagator, RunOptions};

#[test]
#[ignore]
fn smoke_campaigns() {
    // mini decay: N=13 cube, 6 configs, three speeds sharing a seed
    let decay_cfg = |v0: f64, t_end: f64| {
        let params = PhysParams { delta: 0.0, zeeman: 0.0, rabi: 0.1, v0, density: 0.1 };
        let plan = RunPlan {
            t_end, sample_dt: 0.5, transient_cut: 0.0, n_configs: 6, seed: 5101,
            rel_tol: 1e-6, abs_tol: 1e-10, ..RunPlan::default()
        };
        validate_config(params, Geometry::cube(5.0), plan).unwrap()
    };
    let opts = RunOptions {
        retain_traces: true, propagator: Propagator::FrozenStepExpm, source_m: 0,
        reduced_precision_kernel: false,
    };
    let st = run_decay(&decay_cfg(0.0, 20.0), &opts).unwrap();
    let mv = run_decay(&decay_cfg(0.01, 20.0), &opts).unwrap();
    assert_eq!(st.times.len(), st.mean.len());
    assert!(st.traces.as_ref().unwrap().len() == 6);
    assert!((st.mean[0] - 1.0).abs() < 1e-12, "P(0) = {}", st.mean[0]);
    let r = instantaneous_rate(&st.times, &st.mean, 10.0).unwrap();
    eprintln!("smoke decay: static rate(10) = {r:.3}, moving mean last = {:.3e}", mv.mean.last().unwrap());

    // mini transmission: moving + static paths with the campaign engine
    let slab_cfg = |v0: f64, eps: f64| {
        let params = PhysParams { delta: 0.5, zeeman: 100.0, rabi: 0.1, v0, density: 0.1 };
        let plan = RunPlan {
            t_end: 20.0, sample_dt: 1.0, transient_cut: 10.0, n_configs: 3, seed: 6101,
            rel_tol: 1e-5, abs_tol: 1e-7, kernel_refresh: eps, detector_grid: 8,
        };
        validate_config(params, Geometry::slab(6.0, 2.0, 3.0, 12.0), plan).unwrap()
    };
    let fast = RunOptions {
        propagator: Propagator::FrozenStepExpm, retain_traces: false, source_m: 0,
        reduced_precision_kernel: true,
    };
    let stat = run_transmission(&slab_cfg(0.0, 0.04), &RunOptions::default()).unwrap();
    let movn = run_transmission(&slab_cfg(0.025, 0.04), &fast).unwrap();
    let ts = stat.tbar.unwrap();
    let tm = movn.tbar.unwrap();
    eprintln!("smoke slab: static T = {:.4}±{:.4}, moving T = {:.4}±{:.4}", ts.mean, ts.stderr, tm.mean, tm.stderr);
    assert!(ts.mean > 0.0 && tm.mean > 0.0);
    let vals: Vec<f64> = movn.per_config.iter().map(|&(_, v)| v).collect();
    let spread = (vals.iter().cloned().fold(f64::MIN, f64::max)
        - vals.iter().cloned().fold(f64::MAX, f64::min)) / tm.mean;
    eprintln!("smoke slab: per-config spread = {:.3}", spread);
}
