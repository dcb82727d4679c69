//! The four subcommands. Each validates cheaply, echoes the effective
//! config next to its artifacts, then computes and writes.

use std::fs;
use std::path::Path;

use lightmotion::camera::{build_motion_field, preset, CameraParams};
use lightmotion::denoiser::OracleDenoiser;
use lightmotion::diagnostics::{snr_mismatch_probe, update_shift_probe};
use lightmotion::rng::{CounterRng, STREAM_X0};
use lightmotion::{
    binarize_refine, read_attention_lmt, read_lmt, run_with_initial, write_csv, write_lmt,
    write_mask_lmt, Cell, LatentVideo, NoiseSchedule, SampleProvenance,
};

use crate::config::CliConfig;
use crate::pgm;
use crate::{CliError, ProbeKind};

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))
}

const VARIANCE_HEADER: [&str; 3] = ["step", "t_train", "variance"];

pub fn cmd_run(config_path: &Path) -> Result<(), CliError> {
    let cfg = CliConfig::load(config_path)?.effective()?;
    let pipe = cfg.pipeline_config();
    pipe.validate().map_err(CliError::from_core)?;
    let dir = cfg.require_output_dir()?.to_path_buf();
    ensure_dir(&dir)?;
    cfg.echo(&dir)?;

    let schedule = NoiseSchedule::default_linear(pipe.ddim_steps).map_err(CliError::from_core)?;
    let (n, c, h, w) = pipe.shape();
    let x0 = match &cfg.latents.x0 {
        Some(path) => read_lmt(path).map_err(CliError::from_core)?,
        None => {
            let mut data = vec![0.0f32; n * c * h * w];
            CounterRng::new(pipe.seed, &[STREAM_X0]).fill_normal_f32(&mut data);
            LatentVideo::new(n, c, h, w, data).map_err(CliError::from_core)?
        }
    };
    let oracle = OracleDenoiser::new(x0, schedule);
    let initial = match &cfg.latents.initial {
        Some(path) => Some(read_lmt(path).map_err(CliError::from_core)?),
        None => None,
    };

    let trace = run_with_initial(&pipe, &oracle, initial.as_ref()).map_err(CliError::from_core)?;

    let mut written = 1usize;
    if cfg.emit.snapshots {
        let mut snapshots = vec![
            ("z-init.lmt", &trace.z_init),
            ("z-pre-update.lmt", &trace.z_pre_update),
            ("z-post-update.lmt", &trace.z_post_update),
            ("z-pre-renoise.lmt", &trace.z_pre_renoise),
        ];
        if let Some(z) = &trace.z_post_renoise {
            snapshots.push(("z-post-renoise.lmt", z));
        }
        snapshots.push(("z-final.lmt", &trace.z_final));
        for (name, z) in snapshots {
            write_lmt(z, &dir.join(name)).map_err(CliError::from_core)?;
            written += 1;
        }
    }
    if cfg.emit.variance_csv {
        let rows: Vec<Vec<Cell>> = trace
            .variances
            .iter()
            .map(|v| {
                vec![
                    Cell::Int(v.ddim_index as i64),
                    Cell::Int(v.t_train as i64),
                    Cell::Real(v.variance),
                ]
            })
            .collect();
        write_csv(&dir.join("variance.csv"), &VARIANCE_HEADER, &rows)
            .map_err(CliError::from_core)?;
        written += 1;
    }
    if cfg.emit.provenance_csv {
        write_csv(
            &dir.join("provenance.csv"),
            &SampleProvenance::CSV_HEADER,
            &trace.provenance.to_csv_rows(),
        )
        .map_err(CliError::from_core)?;
        written += 1;
    }
    if cfg.emit.field_pgm {
        let field = build_motion_field(&pipe.camera, n, h, w).map_err(CliError::from_core)?;
        for i in 0..n {
            let bytes = pgm::displacement_bytes(&field, i);
            pgm::write_pgm(&dir.join(format!("displacement-{:02}.pgm", i + 1)), w, h, &bytes)?;
            let omega = pgm::mask_bytes(&trace.omega, i);
            pgm::write_pgm(&dir.join(format!("omega-{:02}.pgm", i + 1)), w, h, &omega)?;
            written += 2;
        }
    }
    if cfg.emit.mask_pgm {
        let mask = cfg
            .mask
            .to_source()
            .resolve(n, h, w)
            .map_err(CliError::from_core)?;
        for i in 0..n {
            let bytes = pgm::mask_bytes(&mask, i);
            pgm::write_pgm(&dir.join(format!("mask-{:02}.pgm", i + 1)), w, h, &bytes)?;
            written += 1;
        }
    }

    println!("run: wrote {written} files to {}", dir.display());
    Ok(())
}

pub fn cmd_field(
    preset_name: &str,
    frame: usize,
    frames: usize,
    height: usize,
    width: usize,
    theta: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    let mut params = if preset_name == "identity" {
        CameraParams::identity()
    } else {
        preset(preset_name)
            .ok_or_else(|| CliError::Config(format!("unknown preset `{preset_name}`")))?
    };
    if let Some(t) = theta {
        params.theta = t;
    }
    if frame == 0 || frame > frames {
        return Err(CliError::Config(format!(
            "frame {frame} out of range 1..={frames}"
        )));
    }
    let field = build_motion_field(&params, frames, height, width).map_err(CliError::from_core)?;
    ensure_dir(out)?;
    let displacement = pgm::displacement_bytes(&field, frame - 1);
    pgm::write_pgm(&out.join("displacement.pgm"), width, height, &displacement)?;
    let omega = pgm::mask_bytes(field.new_mask(), frame - 1);
    pgm::write_pgm(&out.join("omega.pgm"), width, height, &omega)?;
    println!(
        "field: frame {frame}/{frames} of `{preset_name}` rendered to {}",
        out.display()
    );
    Ok(())
}

const SNR_HEADER: [&str; 4] = ["t_true", "t_assumed", "measured", "expected"];
const UPDATE_HEADER: [&str; 7] = [
    "step",
    "t_train",
    "variance_with_update",
    "variance_without_update",
    "duplicate_correlation",
    "fresh_correlation",
    "mean_duplicates",
];

pub fn cmd_probe(kind: ProbeKind, config_path: &Path) -> Result<(), CliError> {
    let cfg = CliConfig::load(config_path)?.effective()?;
    let dir = cfg.require_output_dir()?.to_path_buf();
    match kind {
        ProbeKind::SnrMismatch => {
            let schedule =
                NoiseSchedule::default_linear(cfg.ddim_steps).map_err(CliError::from_core)?;
            ensure_dir(&dir)?;
            cfg.echo(&dir)?;
            let mut rows = Vec::with_capacity(cfg.ddim_steps);
            for k in 1..=cfg.ddim_steps {
                let t_true = schedule.train_timestep(k);
                let t_assumed = cfg.probe.t_assumed.unwrap_or(t_true);
                let (measured, expected) = snr_mismatch_probe(
                    &schedule,
                    t_true,
                    t_assumed,
                    cfg.probe.x0_power,
                    cfg.probe.n_samples,
                    cfg.seed,
                )
                .map_err(CliError::from_core)?;
                rows.push(vec![
                    Cell::Int(t_true as i64),
                    Cell::Int(t_assumed as i64),
                    Cell::Real(measured),
                    Cell::Real(expected),
                ]);
            }
            write_csv(&dir.join("snr-mismatch.csv"), &SNR_HEADER, &rows)
                .map_err(CliError::from_core)?;
            println!("probe: snr-mismatch table ({} rows) in {}", rows.len(), dir.display());
        }
        ProbeKind::UpdateShift => {
            let pipe = cfg.pipeline_config();
            pipe.validate().map_err(CliError::from_core)?;
            ensure_dir(&dir)?;
            cfg.echo(&dir)?;
            let report =
                update_shift_probe(&pipe, cfg.probe.n_samples).map_err(CliError::from_core)?;
            let with = report.with_update.points();
            let without = report.without_update.points();
            if with.len() != without.len() {
                return Err(CliError::Runtime(format!(
                    "probe traces disagree: {} vs {} steps",
                    with.len(),
                    without.len()
                )));
            }
            let rows: Vec<Vec<Cell>> = with
                .iter()
                .zip(without)
                .map(|(a, b)| {
                    vec![
                        Cell::Int(a.ddim_index as i64),
                        Cell::Int(a.t_train as i64),
                        Cell::Real(a.variance),
                        Cell::Real(b.variance),
                        Cell::Real(report.duplicate_correlation),
                        match report.fresh_correlation {
                            Some(f) => Cell::Real(f),
                            None => Cell::Text(String::new()),
                        },
                        Cell::Real(report.mean_duplicates),
                    ]
                })
                .collect();
            write_csv(&dir.join("update-shift.csv"), &UPDATE_HEADER, &rows)
                .map_err(CliError::from_core)?;
            println!(
                "probe: update-shift over {} samples, duplicate correlation {:.4}, in {}",
                cfg.probe.n_samples,
                report.duplicate_correlation,
                dir.display()
            );
        }
    }
    Ok(())
}

pub fn cmd_mask(
    attn: &Path,
    token: usize,
    factor: f64,
    window: usize,
    out: &Path,
) -> Result<(), CliError> {
    let map = read_attention_lmt(attn).map_err(CliError::from_core)?;
    let plane = map.extract_token_map(token).map_err(CliError::from_core)?;
    let mask = binarize_refine(&plane, factor, window).map_err(CliError::from_core)?;
    write_mask_lmt(&mask, out).map_err(CliError::from_core)?;
    println!(
        "mask: token {token} marks {} of {} pixels; wrote {}",
        mask.count_true(),
        mask.n_frames() * mask.height() * mask.width(),
        out.display()
    );
    Ok(())
}
