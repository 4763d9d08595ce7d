//! Single-atom sanity checks: exponential decay and the steady-state
//! Lorentzian.
//!
//! An isolated atom excited at `t = 0` decays as `P(t) = e^{-γt}`; a weakly
//! driven one settles to `b = (Ω_e/2)/(δ + iγ/2)`, i.e. a Lorentzian line
//! of full width γ. Everything downstream (collective decay, transmission)
//! is measured against these limits.
//!
//! Run with: `cargo run --release --example single_atom`

use coldscatter::config::{Geometry, PhysParams, RunPlan};
use coldscatter::coupling::{assemble, drive_vector, SublevelIndex};
use coldscatter::dynamics::{integrate_free, steady_state, ExcitationVector};
use coldscatter::ensemble::AtomKinematics;
use coldscatter::observables::survival_probability;

fn main() {
    let params = PhysParams::default();
    let geometry = Geometry::cube(1.0);
    let kin = AtomKinematics::new(
        vec![geometry.center()],
        vec![[0.0, 0.0, 0.0]],
        &geometry,
    )
    .unwrap();

    println!("# free decay of one atom");
    println!("# t_gamma   P_s        e^-t       |diff|");
    let plan = RunPlan {
        rel_tol: 1e-12,
        abs_tol: 1e-15,
        ..RunPlan::default()
    };
    let grid: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let b0 = ExcitationVector::unit(1, SublevelIndex::new(0, 0), 0.0);
    let traj = integrate_free(&b0, &kin, &params, &grid, &plan).unwrap();
    for (t, b) in traj.times.iter().zip(&traj.states) {
        let p = survival_probability(b, SublevelIndex::new(0, 0));
        println!(
            "{t:7.2}   {p:.6}   {:.6}   {:.1e}",
            (-t).exp(),
            (p - (-t).exp()).abs()
        );
    }

    println!();
    println!("# driven steady state across the line");
    println!("# delta     |b|^2/Omega^2    Lorentzian 1/(4 delta^2 + 1)");
    for k in -8..=8 {
        let delta = 0.25 * k as f64;
        let p = PhysParams {
            delta,
            ..params
        };
        let m = assemble(kin.positions(), &p, 0.0).unwrap();
        let omega = drive_vector(kin.positions(), &p);
        let b = steady_state(&m, &omega).unwrap();
        let excited = b.b[2].norm_sqr() / (p.rabi * p.rabi);
        println!(
            "{delta:7.2}   {excited:.6}         {:.6}",
            0.25 / (delta * delta + 0.25)
        );
    }
}
