use std::path::{Path, PathBuf};

use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use splatpose::estimator::{track_sequence, Scene};
use splatpose::gradcheck::{run_gradcheck, GradcheckConfig};
use splatpose::metrics_io::{
    aggregate_reports, load_trajectory, save_error_curves, save_trajectory, MetricsReport, TrackConfig, Trajectory,
    TrajectoryRecord,
};
use splatpose::synthlab::{
    fit_canonical_model, generate_dataset, generate_sequence, load_manifest, DatasetManifest, DatasetSpec, FitConfig,
    FitView, SequenceSpec, MANIFEST_FILE,
};
use splatpose::tool_model::{default_tool_model, load_tool_model, save_tool_model};
use splatpose::{Error, ToolModel64};

use crate::{overrides, CliError, EvalArgs, FitArgs, GradcheckArgs, SynthArgs, TrackArgs};

type Result<T> = std::result::Result<T, CliError>;

fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
        Error::parse(path, line, e.message()).into()
    })
}

fn model(path: Option<&Path>) -> Result<ToolModel64> {
    match path {
        Some(p) => Ok(load_tool_model(p)?),
        None => Ok(default_tool_model()),
    }
}

fn manifest(path: &Path) -> Result<DatasetManifest> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    Ok(load_manifest(&file)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

pub fn synth_dataset(a: &SynthArgs) -> Result<()> {
    let spec: DatasetSpec = load_toml(a.spec.as_deref())?;
    let m = generate_dataset(&model(a.model.as_deref())?, &spec, &a.out)?;
    println!("wrote {} records to {}", m.records.len(), m.path().display());
    Ok(())
}

pub fn synth_sequence(a: &SynthArgs) -> Result<()> {
    let spec: SequenceSpec = load_toml(a.spec.as_deref())?;
    let out = generate_sequence(&model(a.model.as_deref())?, &spec, &a.out)?;
    println!("wrote {} frames to {}", out.frames.len(), out.manifest.path().display());
    Ok(())
}

pub fn track(a: &TrackArgs, m: &ArgMatches) -> Result<()> {
    let base = match &a.config {
        Some(p) => TrackConfig::load(p)?,
        None => TrackConfig::default(),
    };
    let cfg = overrides::apply(&base, m)?;
    let tool = model(a.model.as_deref())?;
    let data = manifest(&a.frames)?;
    let first = data.records.first().ok_or(Error::EmptyInput)?;
    let k = first.camera()?;
    let mut frames = Vec::with_capacity(data.records.len());
    for r in &data.records {
        let loaded = r.load(&data.dir)?;
        if loaded.intrinsics != k {
            return Err(Error::DimensionMismatch(format!("frame {} uses different intrinsics", r.frame_index)).into());
        }
        frames.push((loaded.frame, loaded.mask));
    }
    let render = cfg.render.settings()?;
    let loss = cfg.loss.config()?;
    let scene = Scene {
        model: &tool,
        intrinsics: &k,
        render: &render,
        loss: &loss,
    };
    let est = track_sequence(&frames, &scene, &cfg.coarse, &cfg.refiner)?;
    let failed = est.iter().filter(|e| e.failed).count();
    if failed > 0 {
        log::warn!("{failed} frames failed numerically and carry the previous estimate");
    }
    let traj = Trajectory::new(
        est.iter()
            .zip(&data.records)
            .map(|(e, r)| TrajectoryRecord {
                frame: r.frame_index,
                pose: e.pose,
                q: e.q,
                loss: Some(e.final_loss),
            })
            .collect(),
    )?;
    save_trajectory(&a.out, &traj)?;
    println!("tracked {} frames into {}", est.len(), a.out.display());
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchEntry {
    est: PathBuf,
    gt: PathBuf,
}

fn batch_reports(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut reports = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: BatchEntry = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let est = load_trajectory(&dir.join(entry.est))?;
        let gt = load_trajectory(&dir.join(entry.gt))?;
        reports.push(MetricsReport::compute(&est, &gt)?);
    }
    Ok(reports)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let text = match (&a.batch, &a.est, &a.gt) {
        (Some(batch), _, _) => aggregate_reports(&batch_reports(batch)?)?.to_text(),
        (None, Some(est), Some(gt)) => {
            let (est, gt) = (load_trajectory(est)?, load_trajectory(gt)?);
            if let Some(c) = &a.curves {
                save_error_curves(c, &est, &gt)?;
            }
            MetricsReport::compute(&est, &gt)?.to_text()
        }
        _ => return Err(CliError::Usage("either --batch or both --est and --gt are required".into())),
    };
    print!("{text}");
    if let Some(r) = &a.report {
        write_text(r, &text)?;
    }
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let init = model(a.init.as_deref())?;
    let data = manifest(&a.views)?;
    let views = data
        .records
        .iter()
        .filter(|r| r.canonical)
        .map(|r| {
            let l = r.load(&data.dir)?;
            Ok(FitView {
                frame: l.frame,
                pose: l.pose,
                intrinsics: l.intrinsics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = FitConfig::default();
    if let Some(n) = a.iters {
        cfg.iters = n;
    }
    let r = fit_canonical_model(&init, &views, &cfg)?;
    save_tool_model(&r.model, &a.out)?;
    println!(
        "fitted {} views over {} iterations: loss {:.6e} -> {:.6e}",
        views.len(),
        r.history.len(),
        r.initial_loss,
        r.final_loss
    );
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let cfg = GradcheckConfig {
        seed: a.seed,
        trials: a.trials,
        width: a.size,
        height: a.size,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&cfg)?;
    for c in report.failures() {
        println!(
            "FAIL trial {} {}: analytic {:?} numeric {:?} rel {:.3e}",
            c.trial,
            c.block,
            c.analytic.as_slice(),
            c.numeric.as_slice(),
            c.rel_err
        );
    }
    let failed = report.failures().count();
    println!(
        "{} trials, {} blocks, {} failed, {} redrawn, worst relative error {:.3e}",
        cfg.trials,
        report.checks.len(),
        failed,
        report.redrawn,
        report.worst_rel_err()
    );
    if failed > 0 {
        return Err(CliError::GradientMismatch(failed));
    }
    Ok(())
}
