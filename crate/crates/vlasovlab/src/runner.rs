//! Drives a configured simulation to completion and persists its
//! artifacts: the diagnostics CSV, ensemble snapshots and a manifest that
//! ties every output to the config hash.

use crate::config::RunConfig;
use crate::diagnostics::DiagnosticsSeries;
use crate::dynamics::step_boris_in_place;
use crate::ensemble::{init_from_grid, PhaseEnsemble};
use crate::error::{Error, Result};
use crate::exponents::{exponents, rat_f64};
use crate::kernels::{kernel_b, strong_norm_gradk, weak_norm_gradk, KernelSpec};
use crate::stability::NoWorkLedger;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Everything a finished run carries in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    pub config_hash: String,
    pub kernel: KernelSpec,
    pub grid_h: f64,
    pub series: DiagnosticsSeries,
    /// one snapshot per recorded frame
    pub snapshots: Vec<PhaseEnsemble>,
    pub nowork: NoWorkLedger,
    pub elapsed_seconds: f64,
}

impl RunOutput {
    pub fn initial(&self) -> &PhaseEnsemble {
        &self.snapshots[0]
    }
}

/// Execute the configured run. Keeps every output frame as a snapshot for
/// the verification checks (desk-scale marker counts).
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let kernel = config.resolved_kernel();
    kernel.validate()?;
    let grid_h = config.resolved_grid_h();
    let mut ensemble = init_from_grid(&config.initial, config.dim)?;
    let mass0 = ensemble.mass();

    let mut series = DiagnosticsSeries::new(
        config.moment_orders.clone(),
        config.density_norm_orders.clone(),
        grid_h,
    );
    let mut snapshots = Vec::new();
    let mut nowork = NoWorkLedger::new(&ensemble);

    series.record(&ensemble)?;
    snapshots.push(ensemble.clone());

    let steps = (config.horizon / config.dt).round() as usize;
    for step in 1..=steps {
        let stats = step_boris_in_place(&mut ensemble, &kernel, &config.field, config.dt);
        nowork.absorb(&stats, config.dt);
        if step % config.output_every == 0 || step == steps {
            if ensemble.has_non_finite() {
                return Err(Error::NumericalBlowup {
                    frame: series.len(),
                    what: "marker state".into(),
                });
            }
            let mass = ensemble.mass();
            if (mass - mass0).abs() > 1e-12 * mass0.max(1e-300) {
                return Err(Error::Invalid(format!(
                    "mass drifted at step {step}: {mass} vs {mass0}"
                )));
            }
            series.record(&ensemble)?;
            snapshots.push(ensemble.clone());
        }
    }
    series.validate()?;

    Ok(RunOutput {
        config: config.clone(),
        config_hash: config.hash(),
        kernel,
        grid_h,
        series,
        snapshots,
        nowork,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Paths of the persisted artifacts.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub series_csv: PathBuf,
    pub manifest: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

/// Kernel norm constants recorded in the manifest.
fn kernel_constants(kernel: &KernelSpec, c: f64) -> Result<serde_json::Value> {
    let b = rat_f64(kernel_b(kernel.dim)?);
    let weak = weak_norm_gradk(kernel, b)?;
    let strong = if kernel.dim == 3 && kernel.kappa > 0.0 && c < 1.5 {
        Some(strong_norm_gradk(kernel, c)?)
    } else {
        None
    };
    Ok(json!({
        "b": b,
        "weak_norm_grad_k_b": weak,
        "strong_norm_exponent_c": c,
        "strong_norm_grad_k_c": strong,
        "softening": kernel.softening,
        "coupling": kernel.coupling,
    }))
}

/// Write the diagnostics CSV, optional snapshots and the manifest.
pub fn write_run_artifacts(out: &RunOutput, dir: &Path) -> Result<Artifacts> {
    std::fs::create_dir_all(dir)?;
    let series_csv = dir.join("series.csv");
    {
        let mut f = std::fs::File::create(&series_csv)?;
        out.series.write_csv(&mut f, &out.config_hash)?;
    }
    let mut snapshot_paths = Vec::new();
    if let Some(every) = out.config.snapshot_every {
        if every > 0 {
            for (frame, snap) in out.snapshots.iter().enumerate() {
                if frame % every == 0 {
                    let path = dir.join(format!("ensemble_{frame:05}.bin"));
                    let mut f = std::fs::File::create(&path)?;
                    snap.write_binary(&mut f, &out.config_hash)?;
                    snapshot_paths.push(path);
                }
            }
        }
    }

    let mut tables = Vec::new();
    for &n in &out.config.moment_orders {
        if n >= 1 {
            tables.push(exponents(n as i64, out.config.dim as i64)?);
        }
    }
    let manifest = dir.join("manifest.json");
    let mut files: Vec<String> = vec!["series.csv".into()];
    files.extend(
        snapshot_paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string()),
    );
    let doc = json!({
        "config_hash": out.config_hash,
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": out.config,
        "kernel_constants": kernel_constants(&out.kernel, out.config.verify.c)?,
        "exponent_tables": tables,
        "grid_h": out.grid_h,
        "timing_seconds": out.elapsed_seconds,
        "files": files,
    });
    std::fs::write(&manifest, serde_json::to_string_pretty(&doc)?)?;
    Ok(Artifacts {
        series_csv,
        manifest,
        snapshots: snapshot_paths,
    })
}

/// Recover the config embedded in a manifest (for series-path verify).
pub fn config_from_manifest(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let cfg = doc
        .get("config")
        .ok_or_else(|| Error::Config("manifest lacks an embedded config".into()))?;
    let cfg: RunConfig = serde_json::from_value(cfg.clone())
        .map_err(|e| Error::Config(format!("embedded config invalid: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
