//! Initial-condition sampling and classical ballistic motion.
//!
//! Atoms start from positions drawn uniformly over the box ("random, but
//! spatially homogeneous on average") with velocity components drawn from a
//! zero-mean Gaussian of standard deviation `v₀` per axis. Between
//! observations each atom moves on a straight line, `r_i(t) = r_i0 + v_i t`;
//! the box is bounded by imaginary surfaces on which atoms scatter
//! elastically. Reflections are folded exactly (event-free triangle-wave
//! folding), so wall interactions inject no velocity noise and speeds are
//! conserved to the bit.

use crate::config::Geometry;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};

/// Positions and velocities of `N` atoms inside a reflecting box.
///
/// A value type: cloning is cheap relative to any use, and distinct
/// configurations advance independently in parallel without shared state.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomKinematics {
    positions: Vec<[f64; 3]>,
    velocities: Vec<[f64; 3]>,
    lo: [f64; 3],
    hi: [f64; 3],
    t_current: f64,
}

/// Draw `n` i.i.d. uniform positions over the box volume.
pub fn sample_positions<R: Rng>(geometry: &Geometry, n: usize, rng: &mut R) -> Vec<[f64; 3]> {
    let lo = geometry.lo();
    let hi = geometry.hi();
    (0..n)
        .map(|_| {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = rng.gen_range(lo[k]..hi[k]);
            }
            p
        })
        .collect()
}

/// Like [`sample_positions`] but rejecting draws closer than `r_min` to any
/// already placed atom. `r_min = 0` disables the check. This exists for
/// numerical experiments only; the physical model imposes no exclusion
/// radius.
pub fn sample_positions_excluding<R: Rng>(
    geometry: &Geometry,
    n: usize,
    r_min: f64,
    rng: &mut R,
) -> Result<Vec<[f64; 3]>> {
    if r_min <= 0.0 {
        return Ok(sample_positions(geometry, n, rng));
    }
    let lo = geometry.lo();
    let hi = geometry.hi();
    let r2 = r_min * r_min;
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(n);
    let max_tries = 10_000usize;
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..max_tries {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = rng.gen_range(lo[k]..hi[k]);
            }
            let ok = out.iter().all(|q| {
                let d2: f64 = (0..3).map(|k| (p[k] - q[k]) * (p[k] - q[k])).sum();
                d2 >= r2
            });
            if ok {
                out.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(vec![format!(
                "could not place {n} atoms with exclusion radius {r_min} (box too crowded)"
            )]));
        }
    }
    Ok(out)
}

/// Draw `n` velocities with each Cartesian component i.i.d. Gaussian,
/// mean 0, standard deviation `v0` (the same dispersion along all axes).
/// `v0 = 0` yields exact zeros (the same number of draws is consumed, so
/// the stream stays aligned across velocity scales).
pub fn sample_velocities<R: Rng>(n: usize, v0: f64, rng: &mut R) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| {
            let mut v = [0.0; 3];
            for comp in &mut v {
                let z: f64 = rng.sample(StandardNormal);
                *comp = v0 * z;
            }
            v
        })
        .collect()
}

/// Fold a free flight `x0 + v·dt` into `[lo, hi]` with specular reflections.
///
/// The unbounded trajectory is mapped through the triangle wave of period
/// `2(hi - lo)`; the velocity sign flips once per wall crossing, which the
/// fold branch encodes. Any number of reflections within `dt` is handled
/// exactly.
fn fold(x0: f64, v: f64, dt: f64, lo: f64, hi: f64) -> (f64, f64) {
    if v * dt == 0.0 {
        // static atoms and zero-time queries keep their coordinates to the bit
        return (x0, v);
    }
    let w = hi - lo;
    let y = (x0 - lo) + v * dt;
    let m = y.rem_euclid(2.0 * w);
    if m <= w {
        (lo + m, v)
    } else {
        (lo + (2.0 * w - m), -v)
    }
}

impl AtomKinematics {
    /// Bundle sampled positions and velocities with the box bounds at `t = 0`.
    pub fn new(
        positions: Vec<[f64; 3]>,
        velocities: Vec<[f64; 3]>,
        geometry: &Geometry,
    ) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::Config(vec![format!(
                "positions ({}) and velocities ({}) differ in length",
                positions.len(),
                velocities.len()
            )]));
        }
        for (i, p) in positions.iter().enumerate() {
            if !geometry.contains(*p) {
                return Err(Error::Config(vec![format!(
                    "atom {i} at {p:?} lies outside the box"
                )]));
            }
        }
        Ok(AtomKinematics {
            positions,
            velocities,
            lo: geometry.lo(),
            hi: geometry.hi(),
            t_current: 0.0,
        })
    }

    /// Sample a complete configuration from the two per-purpose streams.
    pub fn sample<R: Rng>(
        geometry: &Geometry,
        n: usize,
        v0: f64,
        pos_rng: &mut R,
        vel_rng: &mut R,
    ) -> Self {
        let positions = sample_positions(geometry, n, pos_rng);
        let velocities = sample_velocities(n, v0, vel_rng);
        AtomKinematics {
            positions,
            velocities,
            lo: geometry.lo(),
            hi: geometry.hi(),
            t_current: 0.0,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn t_current(&self) -> f64 {
        self.t_current
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn velocities(&self) -> &[[f64; 3]] {
        &self.velocities
    }

    /// Pin atom `i` to a given point (used to place the decay source at the
    /// cube centre). The velocity is left untouched: a pinned source still
    /// moves when `v₀ > 0`.
    pub fn pin_position(&mut self, i: usize, p: [f64; 3]) {
        self.positions[i] = p;
    }

    /// Advance all atoms to `t_current + dt` in place.
    pub fn advance(&mut self, dt: f64) {
        debug_assert!(dt >= 0.0);
        for (p, v) in self.positions.iter_mut().zip(self.velocities.iter_mut()) {
            for k in 0..3 {
                let (x, vx) = fold(p[k], v[k], dt, self.lo[k], self.hi[k]);
                p[k] = x;
                v[k] = vx;
            }
        }
        self.t_current += dt;
    }

    /// Positions at an absolute time `t ≥ t_current`, without mutating.
    /// Equals `advance`ing a copy by `t - t_current`.
    pub fn positions_at(&self, t: f64) -> Vec<[f64; 3]> {
        let dt = t - self.t_current;
        debug_assert!(dt >= 0.0, "positions_at queried in the past");
        self.positions
            .iter()
            .zip(self.velocities.iter())
            .map(|(p, v)| {
                let mut q = [0.0; 3];
                for k in 0..3 {
                    q[k] = fold(p[k], v[k], dt, self.lo[k], self.hi[k]).0;
                }
                q
            })
            .collect()
    }

    /// Write position of atom `i` at absolute time `t` into `out`.
    pub fn position_of_at(&self, i: usize, t: f64, out: &mut [f64; 3]) {
        let dt = t - self.t_current;
        for k in 0..3 {
            out[k] = fold(self.positions[i][k], self.velocities[i][k], dt, self.lo[k], self.hi[k]).0;
        }
    }

    /// Single coordinate of atom `i` at absolute time `t` (axis 0 = x,
    /// 1 = y, 2 = z). The drive phase needs only `z`, so this avoids
    /// touching the other axes in the innermost integrator loop.
    #[inline]
    pub fn coordinate_at(&self, i: usize, axis: usize, t: f64) -> f64 {
        let dt = t - self.t_current;
        fold(
            self.positions[i][axis],
            self.velocities[i][axis],
            dt,
            self.lo[axis],
            self.hi[axis],
        )
        .0
    }

    /// Allocation-free bulk variant of [`AtomKinematics::positions_at`].
    pub fn write_positions_at(&self, t: f64, out: &mut Vec<[f64; 3]>) {
        let dt = t - self.t_current;
        out.clear();
        out.extend(self.positions.iter().zip(&self.velocities).map(|(p, v)| {
            let mut q = [0.0; 3];
            for k in 0..3 {
                q[k] = fold(p[k], v[k], dt, self.lo[k], self.hi[k]).0;
            }
            q
        }));
    }

    /// Total kinetic energy proxy `Σ|v_i|²`; conserved under `advance`.
    pub fn speed_square_sum(&self) -> f64 {
        self.velocities
            .iter()
            .map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
            .sum()
    }

    /// Largest per-axis speed over the ensemble; bounds how fast any atom can
    /// drift away from a kernel-assembly snapshot.
    pub fn max_speed(&self) -> f64 {
        self.velocities
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Dump `(positions, velocities)` as CSV with header
    /// `atom,x,y,z,vx,vy,vz` (λ̄ and k₀v/γ units).
    pub fn dump_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "atom,x,y,z,vx,vy,vz")?;
        for (i, (p, v)) in self.positions.iter().zip(&self.velocities).enumerate() {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                i, p[0], p[1], p[2], v[0], v[1], v[2]
            )?;
        }
        Ok(())
    }

    /// Load a snapshot written by [`AtomKinematics::dump_csv`].
    pub fn load_csv<R: BufRead>(r: R, geometry: &Geometry) -> Result<Self> {
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("snapshot", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("atom,") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Parse {
                    context: format!("snapshot line {}", lineno + 1),
                    message: format!("expected 7 fields, got {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::Parse {
                    context: format!("snapshot line {}", lineno + 1),
                    message: format!("bad float {s:?}"),
                })
            };
            positions.push([parse(fields[1])?, parse(fields[2])?, parse(fields[3])?]);
            velocities.push([parse(fields[4])?, parse(fields[5])?, parse(fields[6])?]);
        }
        AtomKinematics::new(positions, velocities, geometry)
    }
}
