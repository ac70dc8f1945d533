//! Subcommand implementations shared by the binary and the tests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sphrtf::eval::{emit_report, fmt_float, stats, SubjectReport};
use sphrtf::geometry::Side;
use sphrtf::hrtf::{ShTargets, SmoothingError};
use sphrtf::neural::{run_fold, train_models, LoocvConfig, SubjectData, TrainedModels};
use sphrtf::pipeline::{to_subject_data, Preparer, SubjectFeatures, SubjectSource};
use sphrtf::sphere::DirectionSet;
use sphrtf::synthetic::{gen_subject, SphereSubjectSpec, SynthOptions};

use crate::config::PipelineConfig;
use crate::dataset::Dataset;

pub const PREPARED: &str = "prepared";
pub const TARGETS: &str = "targets.bin";
pub const FEATURES: &str = "features.bin";
pub const SMOOTHING: &str = "smoothing.toml";
pub const HASH: &str = "inputs.sha256";
pub const LOOCV: &str = "loocv";
pub const PREDICTIONS: &str = "predictions";
pub const BASELINE: &str = "baseline";
pub const REPORTS: &str = "reports";
pub const BASELINE_REPORTS: &str = "reports_baseline";
pub const OVERALL: &str = "overall.csv";

/// Per-subject or per-fold failures of a run that otherwise completed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<(String, String)>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

fn synth_options(cfg: &PipelineConfig) -> SynthOptions {
    SynthOptions {
        ir_length: cfg.synth.ir_length,
        fft_length: cfg.synth.fft_length,
        mesh_subdivisions: cfg.synth.mesh_subdivisions,
        ..SynthOptions::default()
    }
}

/// Generates a synthetic rigid-sphere population under `out`.
pub fn synth(cfg: &PipelineConfig, out: &Path, jobs: usize) -> Result<Outcome> {
    let s = &cfg.synth;
    let dirs = DirectionSet::ring_layout(s.direction_count, s.ring_step_deg)?;
    let specs = SphereSubjectSpec::population(s.subjects, s.seed, s.radius_min_m, s.radius_max_m);
    let opts = synth_options(cfg);
    let subjects = pool(jobs)?.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let g = gen_subject(spec, &dirs, s.sample_rate_hz, &opts)?;
                Ok(SubjectSource {
                    archive: g.archive,
                    mesh: g.mesh,
                    anthro: g.anthro,
                    ears: g.ears,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Dataset::write(out, &subjects)?;
    cfg.echo(out)?;
    Ok(Outcome::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SmoothingSidecar {
    lsd_left_db: f64,
    lsd_right_db: f64,
    onset_left_us: f64,
    onset_right_us: f64,
}

impl From<SmoothingError> for SmoothingSidecar {
    fn from(s: SmoothingError) -> Self {
        Self {
            lsd_left_db: s.lsd_db[0],
            lsd_right_db: s.lsd_db[1],
            onset_left_us: s.onset_us[0],
            onset_right_us: s.onset_us[1],
        }
    }
}

/// Reads a subject's smoothing sidecar as `(lsd_db, onset_us)` per ear.
pub fn read_smoothing(dir: &Path) -> Result<SmoothingError> {
    let p = dir.join(SMOOTHING);
    let s: SmoothingSidecar = toml::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?;
    Ok(SmoothingError {
        lsd_db: [s.lsd_left_db, s.lsd_right_db],
        onset_us: [s.onset_left_us, s.onset_right_us],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepareStatus {
    Computed,
    UpToDate,
}

fn reference_id(ds: &Dataset, cfg: &PipelineConfig) -> Result<String> {
    let r = &cfg.dataset.reference_subject;
    if r.is_empty() {
        return Ok(ds.manifest.subjects[0].id.clone());
    }
    ds.entry(r)?;
    Ok(r.clone())
}

fn input_hash(ds: &Dataset, cfg: &PipelineConfig, id: &str, reference: &str) -> Result<String> {
    let mut h = Sha256::new();
    h.update(toml::to_string(&cfg.prepare)?.as_bytes());
    h.update(toml::to_string(ds.entry(id)?)?.as_bytes());
    for r in [ds.anthro(id)?, ds.anthro(reference)?] {
        h.update(format!("{}{:?}{:?}", r.subject_id, r.columns, r.measurements).as_bytes());
    }
    for f in ds.input_files(id) {
        h.update(std::fs::read(&f).with_context(|| format!("reading {}", f.display()))?);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn prepared_dir(out: &Path, id: &str) -> PathBuf {
    out.join(PREPARED).join(id)
}

fn dataset_preparer(ds: &Dataset, cfg: &PipelineConfig) -> Result<Preparer> {
    let first = ds.load_archive(&ds.manifest.subjects[0].id)?;
    Ok(Preparer::new(cfg.prepare.clone(), first.directions())?)
}

fn prepare_one(ds: &Dataset, cfg: &PipelineConfig, prep: &Preparer, out: &Path, id: &str, reference: &str) -> Result<PrepareStatus> {
    let dir = prepared_dir(out, id);
    let hash = input_hash(ds, cfg, id, reference)?;
    let outputs = [TARGETS, FEATURES, SMOOTHING].map(|f| dir.join(f));
    let stored = std::fs::read_to_string(dir.join(HASH)).unwrap_or_default();
    if stored.trim() == hash && outputs.iter().all(|p| p.exists()) {
        return Ok(PrepareStatus::UpToDate);
    }
    let source = ds.load_source(id)?;
    let p = prep.prepare(&source, ds.anthro(reference)?)?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let _ = std::fs::remove_file(dir.join(HASH));
    p.targets.save(&outputs[0])?;
    p.features.save(&outputs[1])?;
    std::fs::write(&outputs[2], toml::to_string(&SmoothingSidecar::from(p.smoothing))?)
        .with_context(|| format!("writing {}", outputs[2].display()))?;
    std::fs::write(dir.join(HASH), format!("{hash}\n"))?;
    Ok(PrepareStatus::Computed)
}

/// Prepares every manifest subject; failures are collected per subject.
pub fn prepare(cfg: &PipelineConfig, out: &Path, jobs: usize) -> Result<(Outcome, Vec<(String, PrepareStatus)>)> {
    let ds = Dataset::open(&cfg.dataset.root)?;
    let reference = reference_id(&ds, cfg)?;
    let prep = dataset_preparer(&ds, cfg)?;
    cfg.echo(out)?;
    let ids = ds.ids();
    let results: Vec<Result<PrepareStatus>> =
        pool(jobs)?.install(|| ids.par_iter().map(|id| prepare_one(&ds, cfg, &prep, out, id, &reference)).collect());
    let mut outcome = Outcome::default();
    let mut done = Vec::new();
    for (id, r) in ids.into_iter().zip(results) {
        match r {
            Ok(s) => done.push((id, s)),
            Err(e) => outcome.failures.push((id, format!("{e:#}"))),
        }
    }
    Ok((outcome, done))
}

/// Loads prepared features and targets in manifest order.
pub fn load_prepared(ds: &Dataset, out: &Path) -> Result<Vec<(SubjectFeatures, ShTargets)>> {
    ds.ids()
        .iter()
        .map(|id| {
            let dir = prepared_dir(out, id);
            let f = SubjectFeatures::load(&dir.join(FEATURES)).with_context(|| format!("subject {id} is not prepared"))?;
            let t = ShTargets::load(&dir.join(TARGETS)).with_context(|| format!("subject {id} is not prepared"))?;
            Ok((f, t))
        })
        .collect()
}

fn loocv_config(cfg: &PipelineConfig) -> LoocvConfig {
    LoocvConfig {
        magnitude_train: cfg.train.magnitude.clone(),
        onset_train: cfg.train.onset.clone(),
        magnitude_arch: cfg.network.magnitude.clone(),
        onset_arch: cfg.network.onset.clone(),
        center_targets: cfg.train.center_targets,
        zero_output_init: cfg.train.zero_output_init,
    }
}

fn save_models(dir: &Path, stem: &str, m: &TrainedModels) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    m.magnitude_params.save(&dir.join(format!("{stem}magnitude.nn")))?;
    m.onset_params.save(&dir.join(format!("{stem}onset.nn")))?;
    m.magnitude_history.save(&dir.join(format!("{stem}magnitude_loss.csv")))?;
    m.onset_history.save(&dir.join(format!("{stem}onset_loss.csv")))?;
    let p = dir.join(format!("{stem}preprocessing.toml"));
    std::fs::write(&p, toml::to_string(&m.preprocessing)?).with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}

/// Trains one model pair on every prepared subject but the validation one.
pub fn train(cfg: &PipelineConfig, out: &Path) -> Result<Outcome> {
    let ds = Dataset::open(&cfg.dataset.root)?;
    let data: Vec<SubjectData> = load_prepared(&ds, out)?.iter().map(|(f, t)| to_subject_data(f, t)).collect();
    let vid = if cfg.train.validation_subject.is_empty() {
        data.last().map(|s| s.subject_id.clone()).unwrap_or_default()
    } else {
        cfg.train.validation_subject.clone()
    };
    let vi = data.iter().position(|s| s.subject_id == vid).ok_or_else(|| anyhow!("unknown validation subject {vid}"))?;
    let fit: Vec<&SubjectData> = data.iter().enumerate().filter(|&(i, _)| i != vi).map(|(_, s)| s).collect();
    let models = train_models(&fit, &data[vi], &loocv_config(cfg))?;
    let dir = out.join("models");
    save_models(&dir, "", &models)?;
    cfg.echo(&dir)?;
    Ok(Outcome::default())
}

fn targets_file(t: &ShTargets, magnitude: &[Vec<Vec<f64>>; 2], onset: &[Vec<f64>; 2]) -> Result<ShTargets> {
    let m: Vec<f64> = magnitude.iter().flatten().flatten().copied().collect();
    let o: Vec<f64> = onset.iter().flatten().copied().collect();
    Ok(ShTargets::new(t.freqs.clone(), t.magnitude_order, t.onset_order, t.norm_factor, m, o)?)
}

/// Leave-one-out over all prepared subjects, followed by `eval`.
pub fn loocv(cfg: &PipelineConfig, out: &Path, jobs: usize) -> Result<Outcome> {
    let ds = Dataset::open(&cfg.dataset.root)?;
    let prepared = load_prepared(&ds, out)?;
    let data: Vec<SubjectData> = prepared.iter().map(|(f, t)| to_subject_data(f, t)).collect();
    if data.len() < 3 {
        bail!("cross-validation needs at least 3 prepared subjects, found {}", data.len());
    }
    let run = out.join(LOOCV);
    for d in [PREDICTIONS, BASELINE, "models"] {
        std::fs::create_dir_all(run.join(d)).with_context(|| format!("creating {}", run.join(d).display()))?;
    }
    cfg.echo(&run)?;
    let lc = loocv_config(cfg);
    let results: Vec<Result<()>> = pool(jobs)?.install(|| {
        (0..data.len())
            .into_par_iter()
            .map(|i| {
                let f = run_fold(&data, i, &lc)?;
                let t = &prepared[i].1;
                targets_file(t, &f.magnitude, &f.onset)?.save(&run.join(PREDICTIONS).join(format!("{}.bin", f.subject_id)))?;
                targets_file(t, &f.baseline_magnitude, &f.baseline_onset)?
                    .save(&run.join(BASELINE).join(format!("{}.bin", f.subject_id)))?;
                save_models(&run.join("models"), &format!("{}_", f.subject_id), &f.models)
            })
            .collect()
    });
    let mut outcome = Outcome::default();
    for (s, r) in data.iter().zip(results) {
        if let Err(e) = r {
            outcome.failures.push((s.subject_id.clone(), format!("fold failed: {e:#}")));
        }
    }
    if !outcome.ok() {
        return Ok(outcome);
    }
    eval(cfg, out, jobs)
}

/// Evaluates `<out>/loocv/{predictions,baseline}` against the measurements.
pub fn eval(cfg: &PipelineConfig, out: &Path, jobs: usize) -> Result<Outcome> {
    let ds = Dataset::open(&cfg.dataset.root)?;
    let prep = dataset_preparer(&ds, cfg)?;
    let run = out.join(LOOCV);
    let ids = ds.ids();
    let evaluated: Vec<Result<[SubjectReport; 2]>> = pool(jobs)?.install(|| {
        ids.par_iter()
            .map(|id| {
                let features = SubjectFeatures::load(&prepared_dir(out, id).join(FEATURES))?;
                let measured = prep.measure(&ds.load_archive(id)?, features.norm_factor)?;
                let score = |sub: &str| -> Result<SubjectReport> {
                    let p = run.join(sub).join(format!("{id}.bin"));
                    let t = ShTargets::load(&p).with_context(|| format!("loading {}", p.display()))?;
                    let data = to_subject_data(&features, &t);
                    Ok(prep.evaluate(id, &measured, &data.magnitude, &data.onset)?)
                };
                Ok([score(PREDICTIONS)?, score(BASELINE)?])
            })
            .collect()
    });
    let mut outcome = Outcome::default();
    let mut network = Vec::new();
    let mut baseline = Vec::new();
    for (id, r) in ids.iter().zip(evaluated) {
        match r {
            Ok([n, b]) => {
                network.push(n);
                baseline.push(b);
            }
            Err(e) => outcome.failures.push((id.clone(), format!("{e:#}"))),
        }
    }
    emit_report(&network, &run.join(REPORTS))?;
    emit_report(&baseline, &run.join(BASELINE_REPORTS))?;
    let p = run.join(OVERALL);
    std::fs::write(&p, overall_table(&[("network", &network), ("mean_predictor", &baseline)]))
        .with_context(|| format!("writing {}", p.display()))?;
    Ok(outcome)
}

pub const OVERALL_HEADER: &str = "method,subjects,lsd_left_db,lsd_left_std_db,lsd_right_db,lsd_right_std_db,onset_err_left_us,onset_err_right_us,itd_err_us,itd_err_std_us";

/// Means (and across-subject standard deviations) of the per-subject metrics.
pub fn overall_table(rows: &[(&str, &[SubjectReport])]) -> String {
    let mut s = format!("{OVERALL_HEADER}\n");
    for (name, reports) in rows {
        let lsd = |e: usize| stats(reports.iter().map(|r| r.lsd[e].global));
        let onset = |side: Side| stats(reports.iter().map(|r| r.onset.onset_stats(side).mean));
        let itd = stats(reports.iter().map(|r| r.onset.itd_stats().mean));
        let (l, r) = (lsd(0), lsd(1));
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{},{},{},{},{}",
            reports.len(),
            fmt_float(l.mean),
            fmt_float(l.std),
            fmt_float(r.mean),
            fmt_float(r.std),
            fmt_float(onset(Side::Left).mean),
            fmt_float(onset(Side::Right).mean),
            fmt_float(itd.mean),
            fmt_float(itd.std)
        );
    }
    s
}

/// Parsed `overall.csv` row: `(method, global LSD averaged over ears, mean ITD error)`.
pub fn read_overall(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            let f = |i: usize| -> Result<f64> { Ok(c.get(i).ok_or_else(|| anyhow!("short row"))?.parse()?) };
            Ok((c[0].to_string(), 0.5 * (f(2)? + f(4)?), f(8)?))
        })
        .collect()
}
