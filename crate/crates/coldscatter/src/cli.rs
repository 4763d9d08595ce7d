//! Command-line front end.
//!
//! ```text
//! coldscatter <transmit|decay|spectrum|trace|validate>
//!             --config PATH [--out DIR] [--seed U64] [--workers N] [--force]
//! ```
//!
//! `transmit` and `decay` run the full ensemble experiments and emit the
//! standard result set (`mean_trace.csv`, `stderr_trace.csv`,
//! `summary.csv`, `meta.json`). `spectrum` decomposes `n_configs` frozen
//! configurations into collective modes, one CSV each. `trace` records a
//! single-configuration raw time series (`T(t)` for a slab, `P_s(t)` for a
//! cube). `validate` checks a config file and exits.
//!
//! Exit codes: 0 on success, 1 on configuration/usage errors, 2 on runtime
//! errors. Progress goes to stderr; stdout carries only machine-readable
//! `key = value` summaries. Outputs are byte-identical for identical
//! (config, seed, platform); existing result sets are not overwritten
//! unless `--force` is given.

use crate::config::{Shape, SimConfig};
use crate::coupling::{assemble, SublevelIndex};
use crate::dynamics::{integrate_observed, ExcitationVector};
use crate::ensemble::AtomKinematics;
use crate::montecarlo::{self, derive_stream, RunOptions};
use crate::observables::{survival_probability, transmission, DetectorSpec};
use crate::output;
use crate::spectral;
use crate::{Error, Result};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "coldscatter",
    about = "Collective light scattering in dense, cold, slowly moving atomic ensembles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Simulation config file (flat key = value schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for result files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count (falls back to COLDSCATTER_WORKERS, then to the
    /// core count).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Overwrite existing result sets.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Slab transmission experiment with double averaging.
    Transmit,
    /// Spontaneous decay of a centrally excited atom in a cube.
    Decay,
    /// Mode spectra of frozen configurations.
    Spectrum,
    /// Single-configuration raw time series (T(t) or P_s(t)).
    Trace,
    /// Validate a config file and exit.
    Validate,
}

/// Entry point used by the `coldscatter` binary.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage text; route everything to stderr
            // and fold all usage problems into exit code 1
            eprint!("{e}");
            return 1;
        }
    };

    if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
        // single-threaded BLAS keeps results bit-reproducible; parallelism
        // comes from the configuration-level worker pool
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
    }

    let workers = cli.workers.or_else(|| {
        std::env::var("COLDSCATTER_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(w) = workers {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global();
    }

    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config PATH is required");
            return 1;
        }
    };

    let config = match SimConfig::from_path(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let config = match cli.seed {
        Some(s) => config.with_seed(s),
        None => config,
    };

    let need_out = !matches!(cli.command, Command::Validate);
    let outdir = match (&cli.out, need_out) {
        (Some(d), _) => d.clone(),
        (None, false) => PathBuf::new(),
        (None, true) => {
            eprintln!("error: --out DIR is required for this subcommand");
            return 1;
        }
    };

    let result = match cli.command {
        Command::Validate => cmd_validate(&config),
        Command::Transmit => cmd_transmit(&config, &outdir, cli.force),
        Command::Decay => cmd_decay(&config, &outdir, cli.force),
        Command::Spectrum => cmd_spectrum(&config, &outdir, cli.force),
        Command::Trace => cmd_trace(&config, &outdir, cli.force),
    };

    match result {
        Ok(()) => 0,
        Err(e @ (Error::Config(_) | Error::Parse { .. } | Error::OutputExists(_))) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_validate(config: &SimConfig) -> Result<()> {
    println!("valid = true");
    println!("n_atoms = {}", config.n_atoms());
    println!("doppler_width = {}", config.params().doppler_width());
    println!(
        "shape = {}",
        match config.geometry().shape {
            Shape::Slab => "slab",
            Shape::Cube => "cube",
        }
    );
    Ok(())
}

fn cmd_transmit(config: &SimConfig, outdir: &Path, force: bool) -> Result<()> {
    output::check_overwrite(&output::result_paths(outdir), force)?;
    eprintln!(
        "transmit: {} atoms, {} configs, t_end = {}",
        config.n_atoms(),
        config.plan().n_configs,
        config.plan().t_end
    );
    let opts = RunOptions::default();
    let result = montecarlo::run_transmission(config, &opts)?;
    output::emit_results(&result, outdir, config, "transmission", force)?;
    let tbar = result.tbar.expect("transmission always reports tbar");
    println!("t_bar = {}", output::fmt_g12(tbar.mean));
    println!("t_bar_stderr = {}", output::fmt_g12(tbar.stderr));
    println!("n_configs = {}", result.n_configs);
    Ok(())
}

fn cmd_decay(config: &SimConfig, outdir: &Path, force: bool) -> Result<()> {
    output::check_overwrite(&output::result_paths(outdir), force)?;
    eprintln!(
        "decay: {} atoms, {} configs, t_end = {}",
        config.n_atoms(),
        config.plan().n_configs,
        config.plan().t_end
    );
    let opts = RunOptions::default();
    let result = montecarlo::run_decay(config, &opts)?;
    output::emit_results(&result, outdir, config, "decay", force)?;
    let last = result.mean.last().copied().unwrap_or(f64::NAN);
    println!("p_s_final = {}", output::fmt_g12(last));
    println!("n_configs = {}", result.n_configs);
    Ok(())
}

fn cmd_spectrum(config: &SimConfig, outdir: &Path, force: bool) -> Result<()> {
    const GAMMA_CUT: f64 = 0.1;
    let plan = config.plan();
    let params = config.params();
    let n = config.n_atoms();
    eprintln!(
        "spectrum: {} atoms, {} frozen configurations",
        n, plan.n_configs
    );
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir.display().to_string(), e))?;

    let mut paths: Vec<PathBuf> = (0..plan.n_configs)
        .map(|idx| outdir.join(format!("spectrum_{idx:04}.csv")))
        .collect();
    paths.push(outdir.join("spectrum_summary.csv"));
    paths.push(outdir.join("meta.json"));
    output::check_overwrite(&paths, force)?;

    let comments = output::config_comments(config);
    let mut summary_rows = Vec::new();
    for idx in 0..plan.n_configs {
        let mut pos_rng = derive_stream(plan.seed, idx, "positions");
        let positions = crate::ensemble::sample_positions(config.geometry(), n, &mut pos_rng);
        let matrix = assemble(&positions, params, 0.0).map_err(|e| e.in_config(idx))?;
        let spectrum = spectral::mode_spectrum(&matrix).map_err(|e| e.in_config(idx))?;
        output::write_spectrum_csv(&paths[idx as usize], &comments, &spectrum)?;
        summary_rows.push((
            idx,
            spectral::subradiant_fraction(&spectrum, GAMMA_CUT),
            spectrum.decay_rates[0],
            *spectrum.decay_rates.last().unwrap(),
        ));
    }

    let mut w = Vec::new();
    use std::io::Write;
    for c in &comments {
        writeln!(w, "# {c}").unwrap();
    }
    writeln!(w, "# gamma_cut = {GAMMA_CUT}").unwrap();
    writeln!(w, "config_id,subradiant_fraction,gamma_min,gamma_max").unwrap();
    for (idx, frac, gmin, gmax) in &summary_rows {
        writeln!(
            w,
            "{},{},{},{}",
            idx,
            output::fmt_g12(*frac),
            output::fmt_g12(*gmin),
            output::fmt_g12(*gmax)
        )
        .unwrap();
    }
    let summary_path = outdir.join("spectrum_summary.csv");
    std::fs::write(&summary_path, w)
        .map_err(|e| Error::io(summary_path.display().to_string(), e))?;

    let meta = output::meta_json(
        config,
        "spectrum",
        &[("gamma_cut", serde_json::json!(GAMMA_CUT))],
    );
    let meta_path = outdir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap())
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;

    let mean_frac =
        summary_rows.iter().map(|r| r.1).sum::<f64>() / summary_rows.len().max(1) as f64;
    println!("subradiant_fraction_mean = {}", output::fmt_g12(mean_frac));
    println!("n_configs = {}", plan.n_configs);
    Ok(())
}

fn cmd_trace(config: &SimConfig, outdir: &Path, force: bool) -> Result<()> {
    let plan = config.plan();
    let params = config.params();
    let n = config.n_atoms();
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir.display().to_string(), e))?;
    let trace_path = outdir.join("trace.csv");
    let meta_path = outdir.join("meta.json");
    output::check_overwrite(&[trace_path.clone(), meta_path.clone()], force)?;

    let mut pos_rng = derive_stream(plan.seed, 0, "positions");
    let mut vel_rng = derive_stream(plan.seed, 0, "velocities");
    let mut kin =
        AtomKinematics::sample(config.geometry(), n, params.v0, &mut pos_rng, &mut vel_rng);
    let times = montecarlo::sample_grid(plan.t_end, plan.sample_dt);
    let mut values = Vec::with_capacity(times.len());

    let kind = match config.geometry().shape {
        Shape::Slab => {
            eprintln!("trace: transmission T(t), {} atoms, one configuration", n);
            let detector = DetectorSpec::from_plan(config.geometry(), plan)?;
            let b0 = ExcitationVector::zero(n, 0.0);
            let mut pos_buf = Vec::with_capacity(n);
            integrate_observed(&b0, &kin, params, &times, plan, true, |t, b| {
                kin.write_positions_at(t, &mut pos_buf);
                values.push(transmission(b, &pos_buf, params, &detector));
            })?;
            "transmission_trace"
        }
        Shape::Cube => {
            if params.zeeman != 0.0 {
                return Err(Error::Config(vec![
                    "decay trace models zero static field (zeeman must be 0)".into(),
                ]));
            }
            eprintln!("trace: survival P_s(t), {} atoms, one configuration", n);
            let source = SublevelIndex::new(0, 0);
            kin.pin_position(source.atom, config.geometry().center());
            let b0 = ExcitationVector::unit(n, source, 0.0);
            integrate_observed(&b0, &kin, params, &times, plan, false, |_t, b| {
                values.push(survival_probability(b, source));
            })?;
            "decay_trace"
        }
    };

    output::write_trace_csv(
        &trace_path,
        &output::config_comments(config),
        times.iter().zip(&values).map(|(&t, &v)| (t, v, 0)),
    )?;
    let meta = output::meta_json(config, kind, &[]);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap())
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;

    println!("samples = {}", values.len());
    println!(
        "final_value = {}",
        output::fmt_g12(values.last().copied().unwrap_or(f64::NAN))
    );
    Ok(())
}
