//! Ballistic motion with specular reflections: speeds are conserved to the
//! bit, the box is never left, and a uniform cloud stays uniform.
//!
//! Run with: `cargo run --release --example kinematics`

use coldscatter::config::Geometry;
use coldscatter::ensemble::AtomKinematics;
use coldscatter::montecarlo::derive_stream;

fn main() {
    let geometry = Geometry::slab(10.0, 3.0, 5.0, 12.0);
    let mut kin = AtomKinematics::sample(
        &geometry,
        5000,
        0.025,
        &mut derive_stream(1, 0, "positions"),
        &mut derive_stream(1, 0, "velocities"),
    );

    let e0 = kin.speed_square_sum();
    println!("# evolving 5000 atoms, k0 v0 = 0.025, slab 10 x 10 x 3");
    println!("# t_gamma   sum v^2 drift   mean z     frac in z < L/2");
    for step in 0..=8 {
        let half: usize = kin
            .positions()
            .iter()
            .filter(|p| p[2] < 0.5 * geometry.l)
            .count();
        let mean_z: f64 =
            kin.positions().iter().map(|p| p[2]).sum::<f64>() / kin.n_atoms() as f64;
        println!(
            "{:7.0}   {:.2e}        {mean_z:.4}     {:.4}",
            kin.t_current(),
            (kin.speed_square_sum() - e0).abs() / e0,
            half as f64 / kin.n_atoms() as f64
        );
        if step < 8 {
            kin.advance(250.0);
        }
    }

    // a single reflecting trajectory, folded exactly
    let g1 = Geometry::cube(1.0);
    let one = AtomKinematics::new(vec![[0.4, -0.3, 0.9]], vec![[0.02, -0.013, 0.07]], &g1).unwrap();
    println!();
    println!("# one atom bouncing in a unit cube (z coordinate)");
    for k in 0..=10 {
        let t = 4.0 * k as f64;
        let p = one.positions_at(t);
        println!("t = {t:5.1}: z = {:.4}", p[0][2]);
    }
}
