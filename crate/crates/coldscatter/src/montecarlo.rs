//! Ensemble experiments: slab transmission and spontaneous decay.
//!
//! Both experiments average over independent random initial conditions
//! (positions and velocities). Every configuration draws from
//! counter-derived random streams keyed by `(master seed, config index,
//! purpose)`, so results are bit-reproducible for a fixed seed no matter
//! how the work is scheduled across threads, and the position stream of a
//! configuration is shared across velocity scales.
//!
//! Transmission follows the double-averaging protocol: switch the source on
//! at `t = 0` with all atoms in the ground state, record `T(t)`, time-average
//! over `[transient_cut, t_end]` (defaults 150 and 1150 γ⁻¹, i.e. a window
//! of γΔt ≈ 1000 after the quasi-stationary regime is established), then
//! average those per-configuration numbers over the ensemble. For immobile
//! atoms a fast path solves the steady state directly per configuration.
//!
//! Decay places one atom exactly at the cube centre, excites a single
//! Zeeman sublevel of it, and follows `P_s(t) = |b_s(t)|²` with the drive
//! off. The source atom still moves when `v₀ > 0`.

use crate::config::{Shape, SimConfig};
use crate::coupling::{assemble, drive_vector, SublevelIndex};
use crate::dynamics::{
    integrate_observed, propagate_frozen_stepped, propagate_frozen_stepped_reduced,
    ExcitationVector, StaticPropagator,
};
use crate::ensemble::AtomKinematics;
use crate::observables::{survival_probability, time_average, transmission, DetectorSpec};
use crate::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// Independent, reproducible random stream for one `(seed, config, purpose)`
/// triple. Distinct purposes ("positions", "velocities") never collide.
pub fn derive_stream(master_seed: u64, config_index: u64, purpose: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"coldscatter.stream.v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update(config_index.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

/// Which engine advances moving-atom configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagator {
    /// Adaptive Dormand-Prince 5(4) (the default).
    #[default]
    AdaptiveRk,
    /// Exponential stepping of the piecewise-frozen system; preferred for
    /// long runs with a large Zeeman splitting.
    FrozenStepExpm,
}

/// Run-time options that are not part of the on-disk config schema.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub propagator: Propagator,
    /// Keep every per-configuration trace in the result (off by default:
    /// ensembles of 10⁴ configurations retain only reductions).
    pub retain_traces: bool,
    /// Initially excited Zeeman sublevel of the decay source atom.
    pub source_m: i8,
    /// Run the exponential engine's matrix-vector product against a
    /// single-precision split copy of the kernel (FrozenStepExpm only);
    /// halves the memory traffic of long campaigns at ~1e-7 relative noise
    /// per application. Validate against a full-precision run.
    pub reduced_precision_kernel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            propagator: Propagator::AdaptiveRk,
            retain_traces: false,
            source_m: 0,
            reduced_precision_kernel: false,
        }
    }
}

/// Ensemble mean with its standard error (σ/√n over independent configs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { mean, stderr: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    Estimate {
        mean,
        stderr: (var / n as f64).sqrt(),
    }
}

/// Outcome of one ensemble experiment.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Sample times (γ⁻¹).
    pub times: Vec<f64>,
    /// Ensemble-mean trace at each sample time.
    pub mean: Vec<f64>,
    /// Standard error of the mean at each sample time.
    pub stderr: Vec<f64>,
    /// Per-configuration scalar summary: the time-averaged transmittance
    /// (transmission) or the final-time survival probability (decay).
    pub per_config: Vec<(u64, f64)>,
    /// Double-averaged quasi-stationary transmittance (transmission only).
    pub tbar: Option<Estimate>,
    /// Retained per-configuration traces (see [`RunOptions::retain_traces`]).
    pub traces: Option<Vec<Vec<f64>>>,
    pub n_configs: u64,
}

/// Observable sampling grid: multiples of `sample_dt` up to `t_end`
/// (with `t_end` itself always included).
pub fn sample_grid(t_end: f64, sample_dt: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * sample_dt;
        if t > t_end + 1e-9 {
            break;
        }
        grid.push(t);
        k += 1;
    }
    if *grid.last().unwrap() < t_end - 1e-9 {
        grid.push(t_end);
    }
    grid
}

struct ConfigOutcome {
    trace: Vec<f64>,
    summary: f64,
}

fn reduce(
    times: Vec<f64>,
    outcomes: Vec<ConfigOutcome>,
    retain: bool,
    with_tbar: bool,
) -> ExperimentResult {
    let n_configs = outcomes.len();
    let n_times = times.len();
    let mut mean = vec![0.0; n_times];
    let mut stderr = vec![0.0; n_times];
    for k in 0..n_times {
        let column: Vec<f64> = outcomes.iter().map(|o| o.trace[k]).collect();
        let est = mean_stderr(&column);
        mean[k] = est.mean;
        stderr[k] = est.stderr;
    }
    let per_config: Vec<(u64, f64)> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| (i as u64, o.summary))
        .collect();
    let summaries: Vec<f64> = per_config.iter().map(|&(_, v)| v).collect();
    let tbar = with_tbar.then(|| mean_stderr(&summaries));
    let traces = retain.then(|| outcomes.into_iter().map(|o| o.trace).collect());
    ExperimentResult {
        times,
        mean,
        stderr,
        per_config,
        tbar,
        traces,
        n_configs: n_configs as u64,
    }
}

fn collect_ordered<F>(n_configs: u64, run_one: F) -> Result<Vec<ConfigOutcome>>
where
    F: Fn(u64) -> Result<ConfigOutcome> + Sync,
{
    let results: Vec<Result<ConfigOutcome>> = (0..n_configs)
        .into_par_iter()
        .map(|idx| run_one(idx).map_err(|e| e.in_config(idx)))
        .collect();
    // deterministic reduction: inspect in index order
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

/// Transmission experiment (slab): per configuration, switch the drive on
/// at `t = 0`, record `T(t)`, time-average over the stationary window, then
/// average over the ensemble. `v₀ = 0` uses the steady-state solve.
pub fn run_transmission(config: &SimConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    if config.geometry().shape != Shape::Slab {
        return Err(Error::Config(vec![
            "transmission experiment requires slab geometry".into(),
        ]));
    }
    let params = *config.params();
    let geometry = *config.geometry();
    let plan = config.plan().clone();
    let n = config.n_atoms();
    let detector = DetectorSpec::from_plan(&geometry, &plan)?;
    let times = sample_grid(plan.t_end, plan.sample_dt);
    let static_atoms = params.v0 == 0.0;

    let outcomes = collect_ordered(plan.n_configs, |idx| {
        let mut pos_rng = derive_stream(plan.seed, idx, "positions");
        let mut vel_rng = derive_stream(plan.seed, idx, "velocities");
        let kin = AtomKinematics::sample(&geometry, n, params.v0, &mut pos_rng, &mut vel_rng);

        if static_atoms {
            // frozen baseline: quasi-stationary T directly from the linear solve
            let matrix = assemble(kin.positions(), &params, 0.0)?;
            let omega = drive_vector(kin.positions(), &params);
            let ss = crate::dynamics::steady_state(&matrix, &omega)?;
            let t_value = transmission(&ss.b, kin.positions(), &params, &detector);
            return Ok(ConfigOutcome {
                trace: vec![t_value; times.len()],
                summary: t_value,
            });
        }

        let b0 = ExcitationVector::zero(n, 0.0);
        let mut trace = Vec::with_capacity(times.len());
        let mut pos_buf = Vec::with_capacity(n);
        {
            let observer = |t: f64, b: &ndarray::Array1<crate::C64>| {
                kin.write_positions_at(t, &mut pos_buf);
                trace.push(transmission(b, &pos_buf, &params, &detector));
            };
            match opts.propagator {
                Propagator::AdaptiveRk => {
                    integrate_observed(&b0, &kin, &params, &times, &plan, true, observer)?;
                }
                Propagator::FrozenStepExpm if opts.reduced_precision_kernel => {
                    propagate_frozen_stepped_reduced(
                        &b0, &kin, &params, &times, &plan, true, observer,
                    )?;
                }
                Propagator::FrozenStepExpm => {
                    propagate_frozen_stepped(&b0, &kin, &params, &times, &plan, true, observer)?;
                }
            }
        }
        let summary = time_average(&times, &trace, plan.transient_cut, plan.t_end)?;
        Ok(ConfigOutcome { trace, summary })
    })?;

    Ok(reduce(times, outcomes, opts.retain_traces, true))
}

/// Spontaneous-decay experiment (cube, zero static field): one atom pinned
/// at the centre starts with unit amplitude on `source_m`; the drive stays
/// off. Frozen ensembles (`v₀ = 0`) propagate through the matrix
/// exponential; moving ensembles integrate.
pub fn run_decay(config: &SimConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    if config.geometry().shape != Shape::Cube {
        return Err(Error::Config(vec![
            "decay experiment requires cube geometry".into(),
        ]));
    }
    if config.params().zeeman != 0.0 {
        return Err(Error::Config(vec![
            "decay experiment models zero static field (zeeman must be 0)".into(),
        ]));
    }
    let params = *config.params();
    let geometry = *config.geometry();
    let plan = config.plan().clone();
    let n = config.n_atoms();
    let source = SublevelIndex::new(0, opts.source_m);
    let times = sample_grid(plan.t_end, plan.sample_dt);
    let static_atoms = params.v0 == 0.0;

    let outcomes = collect_ordered(plan.n_configs, |idx| {
        let mut pos_rng = derive_stream(plan.seed, idx, "positions");
        let mut vel_rng = derive_stream(plan.seed, idx, "velocities");
        let mut kin = AtomKinematics::sample(&geometry, n, params.v0, &mut pos_rng, &mut vel_rng);
        kin.pin_position(source.atom, geometry.center());
        let b0 = ExcitationVector::unit(n, source, 0.0);

        let trace: Vec<f64> = if static_atoms {
            let matrix = assemble(kin.positions(), &params, 0.0)?;
            let prop = StaticPropagator::new(&matrix)?;
            let mut ps = Vec::with_capacity(times.len());
            for &t in &times {
                let b = prop.propagate(&b0.b, t)?;
                ps.push(survival_probability(&b, source));
            }
            ps
        } else {
            let mut ps = Vec::with_capacity(times.len());
            let observer =
                |_t: f64, b: &ndarray::Array1<crate::C64>| ps.push(survival_probability(b, source));
            match opts.propagator {
                Propagator::AdaptiveRk => {
                    integrate_observed(&b0, &kin, &params, &times, &plan, false, observer)?;
                }
                Propagator::FrozenStepExpm if opts.reduced_precision_kernel => {
                    propagate_frozen_stepped_reduced(
                        &b0, &kin, &params, &times, &plan, false, observer,
                    )?;
                }
                Propagator::FrozenStepExpm => {
                    propagate_frozen_stepped(&b0, &kin, &params, &times, &plan, false, observer)?;
                }
            }
            ps
        };

        let summary = *trace.last().unwrap();
        Ok(ConfigOutcome { trace, summary })
    })?;

    Ok(reduce(times, outcomes, opts.retain_traces, false))
}

/// Instantaneous decay rate `-d ln P_s/dt` from a sampled trace, centered
/// finite difference over ±2 sample steps around the sample nearest `t`.
pub fn instantaneous_rate(times: &[f64], values: &[f64], t: f64) -> Result<f64> {
    assert_eq!(times.len(), values.len());
    if times.len() < 5 {
        return Err(Error::WindowNotCovered {
            t_start: t,
            t_end: t,
            trace_start: *times.first().unwrap_or(&f64::NAN),
            trace_end: *times.last().unwrap_or(&f64::NAN),
        });
    }
    let k = times
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (*a - t).abs().partial_cmp(&(*b - t).abs()).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    if k < 2 || k + 2 >= times.len() {
        return Err(Error::WindowNotCovered {
            t_start: t,
            t_end: t,
            trace_start: times[0],
            trace_end: times[times.len() - 1],
        });
    }
    let dt = times[k + 2] - times[k - 2];
    Ok(-(values[k + 2].ln() - values[k - 2].ln()) / dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate_config, Geometry, PhysParams, RunPlan};
    use approx::assert_abs_diff_eq;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = derive_stream(1, 0, "positions");
        let mut b = derive_stream(1, 0, "positions");
        assert_eq!(a.next_u64(), b.next_u64());

        // differing config index: no collisions over 10⁴ draws
        let mut s0 = derive_stream(1, 0, "positions");
        let mut s1 = derive_stream(1, 1, "positions");
        let mut collisions = 0;
        for _ in 0..10_000 {
            if s0.next_u64() == s1.next_u64() {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);

        // purpose tags split at the first draw
        let mut p = derive_stream(1, 0, "positions");
        let mut v = derive_stream(1, 0, "velocities");
        assert_ne!(p.next_u64(), v.next_u64());
    }

    #[test]
    fn grid_includes_endpoint() {
        let g = sample_grid(10.0, 1.0);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 10.0);
        let g = sample_grid(1.0, 0.3);
        assert!((g.last().unwrap() - 1.0).abs() < 1e-12);
    }

    fn tiny_decay_config(v0: f64, n_configs: u64) -> SimConfig {
        let params = PhysParams {
            delta: 0.0,
            zeeman: 0.0,
            rabi: 0.1,
            v0,
            density: 1.0,
        };
        let geometry = Geometry::cube(1.0); // exactly one atom
        let plan = RunPlan {
            t_end: 3.0,
            sample_dt: 0.25,
            transient_cut: 0.0,
            n_configs,
            seed: 5,
            rel_tol: 1e-9,
            abs_tol: 1e-13,
            ..RunPlan::default()
        };
        validate_config(params, geometry, plan).unwrap()
    }

    #[test]
    fn single_atom_decay_is_exponential() {
        // N = 1: mean P_s(t) = e^{-t} for static and moving sources alike
        for v0 in [0.0, 0.05] {
            let cfg = tiny_decay_config(v0, 3);
            let res = run_decay(&cfg, &RunOptions::default()).unwrap();
            for (t, p) in res.times.iter().zip(&res.mean) {
                assert_abs_diff_eq!(*p, (-t).exp(), epsilon = 1e-7);
            }
            assert!(res.stderr.iter().all(|&s| s < 1e-12));
        }
    }

    #[test]
    fn decay_demands_cube_and_zero_field() {
        let params = PhysParams {
            density: 0.2,
            ..PhysParams::default()
        };
        let slab = validate_config(
            params,
            Geometry::slab(10.0, 2.0, 5.0, 12.0),
            RunPlan::default(),
        )
        .unwrap();
        assert!(run_decay(&slab, &RunOptions::default()).is_err());

        let zeeman_params = PhysParams {
            zeeman: 100.0,
            density: 0.2,
            ..PhysParams::default()
        };
        let cube = validate_config(zeeman_params, Geometry::cube(5.0), RunPlan::default()).unwrap();
        assert!(run_decay(&cube, &RunOptions::default()).is_err());
    }

    #[test]
    fn transmission_requires_slab() {
        let params = PhysParams {
            density: 0.2,
            ..PhysParams::default()
        };
        let cube = validate_config(params, Geometry::cube(5.0), RunPlan::default()).unwrap();
        assert!(run_transmission(&cube, &RunOptions::default()).is_err());
    }

    #[test]
    fn static_transmission_is_reproducible() {
        let params = PhysParams {
            delta: 0.5,
            zeeman: 100.0,
            rabi: 0.1,
            v0: 0.0,
            density: 0.1,
        };
        let geometry = Geometry::slab(6.0, 2.0, 3.0, 12.0);
        let plan = RunPlan {
            t_end: 10.0,
            sample_dt: 5.0,
            transient_cut: 0.0,
            n_configs: 4,
            seed: 11,
            detector_grid: 8,
            ..RunPlan::default()
        };
        let cfg = validate_config(params, geometry, plan).unwrap();
        let a = run_transmission(&cfg, &RunOptions::default()).unwrap();
        let b = run_transmission(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.per_config, b.per_config);
        let tbar = a.tbar.unwrap();
        assert!(tbar.mean > 0.0 && tbar.mean.is_finite());
        assert!(a.mean.iter().all(|&t| t >= 0.0));
    }

    #[test]
    fn rate_of_pure_exponential() {
        let times: Vec<f64> = (0..100).map(|k| 0.1 * k as f64).collect();
        let e1: Vec<f64> = times.iter().map(|&t| (-t).exp()).collect();
        let e05: Vec<f64> = times.iter().map(|&t| (-0.5 * t).exp()).collect();
        let flat = vec![0.7; times.len()];
        assert_abs_diff_eq!(
            instantaneous_rate(&times, &e1, 5.0).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            instantaneous_rate(&times, &e05, 5.0).unwrap(),
            0.5,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            instantaneous_rate(&times, &flat, 5.0).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        // too close to the edge
        assert!(instantaneous_rate(&times, &e1, 0.0).is_err());
    }

    #[test]
    fn mean_stderr_basics() {
        let e = mean_stderr(&[2.0, 2.0, 2.0]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
        let e = mean_stderr(&[1.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert_abs_diff_eq!(e.stderr, 1.0, epsilon = 1e-15);
    }
}
