//! CSV emission and metadata sidecars.
//!
//! Traces are plain CSV with `t_gamma,value,config_id` columns, preceded by
//! `#`-prefixed comment lines echoing the parameter snapshot. Numbers are
//! serialized with 12 significant digits, so a parse-back reproduces them
//! to that precision and reruns with identical inputs are byte-identical
//! (no timestamps anywhere). Result sets refuse to overwrite existing
//! files unless forced.

use crate::config::{Shape, SimConfig};
use crate::montecarlo::ExperimentResult;
use crate::{Error, Result};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

/// 12-significant-digit scientific form, e.g. `1.23456789012e-3`.
pub fn fmt_g12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Comment lines carrying the full parameter snapshot.
pub fn config_comments(config: &SimConfig) -> Vec<String> {
    let p = config.params();
    let g = config.geometry();
    let r = config.plan();
    let shape = match g.shape {
        Shape::Slab => "slab",
        Shape::Cube => "cube",
    };
    vec![
        format!(
            "delta = {}, zeeman = {}, rabi = {}, v0 = {}, density = {}",
            p.delta, p.zeeman, p.rabi, p.v0, p.density
        ),
        format!(
            "shape = {shape}, lt = {}, l = {}, ld = {}, detector_offset = {}",
            g.lt, g.l, g.ld, g.detector_offset
        ),
        format!(
            "t_end = {}, sample_dt = {}, transient_cut = {}, n_configs = {}, seed = {}",
            r.t_end, r.sample_dt, r.transient_cut, r.n_configs, r.seed
        ),
        format!(
            "rel_tol = {}, abs_tol = {}, kernel_refresh = {}, detector_grid = {}, n_atoms = {}",
            r.rel_tol, r.abs_tol, r.kernel_refresh, r.detector_grid, config.n_atoms()
        ),
    ]
}

/// Write a trace CSV (`t_gamma,value,config_id`; `config_id = -1` marks
/// ensemble-level rows such as the mean or stderr trace).
pub fn write_trace_csv(
    path: &Path,
    comments: &[String],
    rows: impl Iterator<Item = (f64, f64, i64)>,
) -> Result<()> {
    let mut w = Vec::new();
    for c in comments {
        writeln!(w, "# {c}").unwrap();
    }
    writeln!(w, "t_gamma,value,config_id").unwrap();
    for (t, v, id) in rows {
        writeln!(w, "{},{},{}", fmt_g12(t), fmt_g12(v), id).unwrap();
    }
    fs::write(path, w).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read back a trace CSV written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path) -> Result<Vec<(f64, f64, i64)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t_gamma") {
            continue;
        }
        let mut fields = line.split(',');
        let err = |msg: String| Error::Parse {
            context: format!("{}:{}", path.display(), lineno + 1),
            message: msg,
        };
        let t: f64 = fields
            .next()
            .ok_or_else(|| err("missing t".into()))?
            .parse()
            .map_err(|e| err(format!("bad t: {e}")))?;
        let v: f64 = fields
            .next()
            .ok_or_else(|| err("missing value".into()))?
            .parse()
            .map_err(|e| err(format!("bad value: {e}")))?;
        let id: i64 = fields
            .next()
            .ok_or_else(|| err("missing config_id".into()))?
            .parse()
            .map_err(|e| err(format!("bad config_id: {e}")))?;
        out.push((t, v, id));
    }
    Ok(out)
}

/// Metadata sidecar content for one experiment run.
pub fn meta_json(config: &SimConfig, experiment: &str, extra: &[(&str, serde_json::Value)]) -> serde_json::Value {
    let p = config.params();
    let g = config.geometry();
    let r = config.plan();
    let mut meta = serde_json::json!({
        "experiment": experiment,
        "code_version": env!("CARGO_PKG_VERSION"),
        "params": {
            "delta": p.delta,
            "zeeman": p.zeeman,
            "rabi": p.rabi,
            "v0": p.v0,
            "density": p.density,
            "doppler_width": p.doppler_width(),
        },
        "geometry": {
            "shape": match g.shape { Shape::Slab => "slab", Shape::Cube => "cube" },
            "lt": g.lt,
            "l": g.l,
            "ld": g.ld,
            "detector_offset": g.detector_offset,
            "n_atoms": config.n_atoms(),
        },
        "plan": {
            "t_end": r.t_end,
            "sample_dt": r.sample_dt,
            "transient_cut": r.transient_cut,
            "n_configs": r.n_configs,
            "seed": r.seed,
            "rel_tol": r.rel_tol,
            "abs_tol": r.abs_tol,
            "kernel_refresh": r.kernel_refresh,
            "detector_grid": r.detector_grid,
        },
    });
    for (k, v) in extra {
        meta[*k] = v.clone();
    }
    meta
}

/// The deterministic file set of one experiment.
pub fn result_paths(outdir: &Path) -> [PathBuf; 4] {
    [
        outdir.join("mean_trace.csv"),
        outdir.join("stderr_trace.csv"),
        outdir.join("summary.csv"),
        outdir.join("meta.json"),
    ]
}

/// Refuse to clobber an existing result set unless `force` is passed.
pub fn check_overwrite(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(Error::OutputExists(p.display().to_string()));
        }
    }
    Ok(())
}

/// Emit the standard result set: mean trace, stderr trace, per-config
/// summaries, metadata sidecar.
pub fn emit_results(
    result: &ExperimentResult,
    outdir: &Path,
    config: &SimConfig,
    experiment: &str,
    force: bool,
) -> Result<()> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir.display().to_string(), e))?;
    let [mean_path, stderr_path, summary_path, meta_path] = result_paths(outdir);
    check_overwrite(&result_paths(outdir), force)?;

    let comments = config_comments(config);
    write_trace_csv(
        &mean_path,
        &comments,
        result
            .times
            .iter()
            .zip(&result.mean)
            .map(|(&t, &v)| (t, v, -1)),
    )?;
    write_trace_csv(
        &stderr_path,
        &comments,
        result
            .times
            .iter()
            .zip(&result.stderr)
            .map(|(&t, &v)| (t, v, -1)),
    )?;

    let mut w = Vec::new();
    for c in &comments {
        writeln!(w, "# {c}").unwrap();
    }
    writeln!(w, "config_id,value").unwrap();
    for &(id, v) in &result.per_config {
        writeln!(w, "{},{}", id, fmt_g12(v)).unwrap();
    }
    fs::write(&summary_path, w).map_err(|e| Error::io(summary_path.display().to_string(), e))?;

    let mut extra: Vec<(&str, serde_json::Value)> =
        vec![("n_configs_run", serde_json::json!(result.n_configs))];
    if let Some(tbar) = &result.tbar {
        extra.push((
            "quasi_stationary_transmittance",
            serde_json::json!({"mean": tbar.mean, "stderr": tbar.stderr}),
        ));
    }
    let meta = meta_json(config, experiment, &extra);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap())
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
    Ok(())
}

/// Spectrum CSV: `n,gamma_n,omega_n,ipr_n`.
pub fn write_spectrum_csv(
    path: &Path,
    comments: &[String],
    spectrum: &crate::spectral::ModeSpectrum,
) -> Result<()> {
    let mut w = Vec::new();
    for c in comments {
        writeln!(w, "# {c}").unwrap();
    }
    writeln!(w, "n,gamma_n,omega_n,ipr_n").unwrap();
    for n in 0..spectrum.n_modes() {
        writeln!(
            w,
            "{},{},{},{}",
            n,
            fmt_g12(spectrum.decay_rates[n]),
            fmt_g12(spectrum.frequency_shifts[n]),
            fmt_g12(spectrum.ipr[n])
        )
        .unwrap();
    }
    fs::write(path, w).map_err(|e| Error::io(path.display().to_string(), e))
}
