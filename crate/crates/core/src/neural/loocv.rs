//! Leave-one-out cross-validation over prepared subjects.

use serde::{Deserialize, Serialize};

use super::magnitude::{EarInput, MagnitudeArch, MagnitudeData, MagnitudeNet, MagnitudeProblem};
use super::onset::{OnsetArch, OnsetData, OnsetNet, OnsetProblem};
use super::tensor::Params;
use super::train::{train, LossHistory, TrainConfig};
use crate::error::{Error, Result};

/// Network inputs and SH targets of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    pub subject_id: String,
    /// Per ear, channel-major `[x, y, z][coefficient]`.
    pub ear_sch: [Vec<f64>; 2],
    pub anthro: Vec<f64>,
    /// `[ear][freq][coefficient]`.
    pub magnitude: [Vec<Vec<f64>>; 2],
    /// `[ear][coefficient]`.
    pub onset: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoocvConfig {
    pub magnitude_train: TrainConfig,
    pub onset_train: TrainConfig,
    pub magnitude_arch: MagnitudeArch,
    pub onset_arch: OnsetArch,
    /// Subtract the training-fold mean target before fitting and add it back
    /// to predictions.
    pub center_targets: bool,
    /// Start the final layer of both networks at zero, so an untrained
    /// network predicts the offset.
    pub zero_output_init: bool,
}

impl Default for LoocvConfig {
    fn default() -> Self {
        Self {
            magnitude_train: TrainConfig::default(),
            onset_train: TrainConfig::default(),
            magnitude_arch: MagnitudeArch::default(),
            onset_arch: OnsetArch::default(),
            center_targets: true,
            zero_output_init: true,
        }
    }
}

/// Per-feature z-scoring from training rows; features whose spread is
/// negligible next to the block's magnitude pass through centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let d = first.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd: Vec<f64> = (0..d)
            .map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        // spread under 1% of the block's magnitude is treated as noise, not signal
        let rms = (rows.iter().flat_map(|r| r.iter()).map(|v| v * v).sum::<f64>() / (n * d.max(1) as f64)).sqrt();
        let floor = 1e-2 * rms;
        let scale = sd.iter().map(|&s| if s > floor && s > 0.0 { s } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f32> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| ((v - m) / s) as f32)
            .collect()
    }
}

/// Outputs of one held-out fold.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub subject_id: String,
    pub validation_id: String,
    /// `[ear][freq][coefficient]`.
    pub magnitude: [Vec<Vec<f64>>; 2],
    pub onset: [Vec<f64>; 2],
    /// Mean training target, the reference baseline.
    pub baseline_magnitude: [Vec<Vec<f64>>; 2],
    pub baseline_onset: [Vec<f64>; 2],
    pub models: TrainedModels,
}

fn check(subjects: &[SubjectData], ma: &MagnitudeArch, oa: &OnsetArch, min: usize) -> Result<()> {
    if subjects.len() < min {
        return Err(Error::Invalid(format!("need at least {min} subjects, got {}", subjects.len())));
    }
    for s in subjects {
        let bad = |what: &str| Error::Invalid(format!("subject {}: {what} has the wrong size", s.subject_id));
        if s.anthro.len() != ma.anthro_dim || s.anthro.len() != oa.anthro_dim {
            return Err(bad("anthropometry"));
        }
        for e in 0..2 {
            if s.ear_sch[e].len() != 3 * ma.input_len {
                return Err(bad("ear SCH features"));
            }
            if s.magnitude[e].len() != ma.freq_dim || s.magnitude[e].iter().any(|c| c.len() != ma.output_len()) {
                return Err(bad("magnitude targets"));
            }
            if s.onset[e].len() != oa.output_len {
                return Err(bad("onset targets"));
            }
        }
    }
    Ok(())
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0.0;
    for r in rows {
        if acc.is_empty() {
            acc = vec![0.0; r.len()];
        }
        for (a, &v) in acc.iter_mut().zip(r) {
            *a += v;
        }
        n += 1.0;
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

struct Prepared {
    magnitude: MagnitudeData<f32>,
    onset: OnsetData<f32>,
}

fn prepare(subjects: &[&SubjectData], p: &Preprocessing) -> Prepared {
    let mut magnitude = MagnitudeData {
        groups: Vec::new(),
        rows: Vec::new(),
        targets: Vec::new(),
    };
    let mut onset = OnsetData {
        inputs: Vec::new(),
        targets: Vec::new(),
    };
    let sub = |t: &[f64], o: &[f64]| -> Vec<f32> { t.iter().zip(o).map(|(&a, &b)| (a - b) as f32).collect() };
    for s in subjects {
        let a = p.anthro.apply(&s.anthro);
        for ear in 0..2 {
            let g = magnitude.groups.len();
            magnitude.groups.push(EarInput {
                sch_xyz: p.sch.apply(&s.ear_sch[ear]),
                anthro: a.clone(),
                ear,
            });
            for (f, t) in s.magnitude[ear].iter().enumerate() {
                magnitude.rows.push((g, f));
                magnitude.targets.push(sub(t, &p.magnitude_offset[ear][f]));
            }
            onset.inputs.push((a.clone(), ear));
            onset.targets.push(sub(&s.onset[ear], &p.onset_offset[ear]));
        }
    }
    Prepared { magnitude, onset }
}

/// Index of the validation subject for held-out subject `i`: the next one.
pub fn validation_index(i: usize, n: usize) -> usize {
    (i + 1) % n
}

/// Input scaling and target offsets fitted on the training subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub sch: Standardizer,
    pub anthro: Standardizer,
    /// `[ear][freq][coefficient]`, zero unless targets are centered.
    pub magnitude_offset: [Vec<Vec<f64>>; 2],
    pub onset_offset: [Vec<f64>; 2],
}

/// Both trained networks with their preprocessing.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub preprocessing: Preprocessing,
    pub magnitude_net: MagnitudeNet,
    pub onset_net: OnsetNet,
    pub magnitude_params: Params<f32>,
    pub onset_params: Params<f32>,
    pub magnitude_history: LossHistory,
    pub onset_history: LossHistory,
}

impl TrainedModels {
    /// Magnitude `[ear][freq][coefficient]` and onset `[ear][coefficient]`
    /// predictions; targets of `subject` are ignored.
    pub fn predict(&self, subject: &SubjectData) -> Result<([Vec<Vec<f64>>; 2], [Vec<f64>; 2])> {
        let p = &self.preprocessing;
        let held = prepare(&[subject], p);
        let mut magnitude: [Vec<Vec<f64>>; 2] = Default::default();
        let mut onset: [Vec<f64>; 2] = Default::default();
        for ear in 0..2 {
            let preds = self.magnitude_net.predict_all(&self.magnitude_params, &held.magnitude.groups[ear])?;
            magnitude[ear] = preds
                .iter()
                .zip(&p.magnitude_offset[ear])
                .map(|(y, o)| y.iter().zip(o).map(|(&v, &b)| v as f64 + b).collect())
                .collect();
            let (a, e) = &held.onset.inputs[ear];
            onset[ear] = self
                .onset_net
                .predict(&self.onset_params, a, *e)?
                .iter()
                .zip(&p.onset_offset[ear])
                .map(|(&v, &b)| v as f64 + b)
                .collect();
        }
        Ok((magnitude, onset))
    }
}

/// Fits preprocessing on the training fold (`fit` plus `validation`), trains
/// both networks on `fit` and selects snapshots on `validation`.
pub fn train_models(fit: &[&SubjectData], validation: &SubjectData, config: &LoocvConfig) -> Result<TrainedModels> {
    let ma = &config.magnitude_arch;
    let oa = &config.onset_arch;
    let all: Vec<SubjectData> = fit.iter().map(|s| (*s).clone()).chain([validation.clone()]).collect();
    check(&all, ma, oa, 2)?;
    let fold: Vec<&SubjectData> = fit.iter().copied().chain([validation]).collect();
    let sch_rows: Vec<&[f64]> = fold.iter().flat_map(|s| s.ear_sch.iter().map(Vec::as_slice)).collect();
    let anthro_rows: Vec<&[f64]> = fold.iter().map(|s| s.anthro.as_slice()).collect();
    let preprocessing = Preprocessing {
        sch: Standardizer::fit(&sch_rows)?,
        anthro: Standardizer::fit(&anthro_rows)?,
        magnitude_offset: std::array::from_fn(|e| {
            (0..ma.freq_dim)
                .map(|f| {
                    if config.center_targets {
                        mean_of(fold.iter().map(|s| &s.magnitude[e][f]))
                    } else {
                        vec![0.0; ma.output_len()]
                    }
                })
                .collect()
        }),
        onset_offset: std::array::from_fn(|e| {
            if config.center_targets {
                mean_of(fold.iter().map(|s| &s.onset[e]))
            } else {
                vec![0.0; oa.output_len]
            }
        }),
    };
    let train_set = prepare(fit, &preprocessing);
    let val_set = prepare(&[validation], &preprocessing);
    let mnet = MagnitudeNet::new(ma.clone())?;
    let onet = OnsetNet::new(oa.clone())?;
    let mut mag_init = mnet.init(config.magnitude_train.seed);
    let mut onset_init = onet.init(config.onset_train.seed);
    if config.zero_output_init {
        mag_init.zero_layer(mnet.output_layer());
        onset_init.zero_layer(onet.output_layer());
    }
    let mag = train(
        &MagnitudeProblem { net: &mnet, data: &train_set.magnitude },
        Some(&MagnitudeProblem { net: &mnet, data: &val_set.magnitude }),
        mag_init.cast(),
        &config.magnitude_train,
    )?;
    let ons = train(
        &OnsetProblem { net: &onet, data: &train_set.onset },
        Some(&OnsetProblem { net: &onet, data: &val_set.onset }),
        onset_init.cast(),
        &config.onset_train,
    )?;
    Ok(TrainedModels {
        preprocessing,
        magnitude_net: mnet,
        onset_net: onet,
        magnitude_params: mag.params,
        onset_params: ons.params,
        magnitude_history: mag.history,
        onset_history: ons.history,
    })
}

/// Trains both networks without subject `held_out` (validating on the
/// following subject) and predicts it.
pub fn run_fold(subjects: &[SubjectData], held_out: usize, config: &LoocvConfig) -> Result<FoldResult> {
    check(subjects, &config.magnitude_arch, &config.onset_arch, 3)?;
    if held_out >= subjects.len() {
        return Err(Error::Invalid(format!("fold {held_out} out of range")));
    }
    let n = subjects.len();
    let vi = validation_index(held_out, n);
    let rest: Vec<&SubjectData> = (0..n).filter(|&j| j != held_out).map(|j| &subjects[j]).collect();
    let fit: Vec<&SubjectData> = (0..n).filter(|&j| j != held_out && j != vi).map(|j| &subjects[j]).collect();
    let baseline_magnitude: [Vec<Vec<f64>>; 2] = std::array::from_fn(|e| {
        (0..config.magnitude_arch.freq_dim)
            .map(|f| mean_of(rest.iter().map(|s| &s.magnitude[e][f])))
            .collect()
    });
    let baseline_onset: [Vec<f64>; 2] = std::array::from_fn(|e| mean_of(rest.iter().map(|s| &s.onset[e])));
    let models = train_models(&fit, &subjects[vi], config)?;
    let target = &subjects[held_out];
    let (magnitude, onset) = models.predict(target)?;
    Ok(FoldResult {
        subject_id: target.subject_id.clone(),
        validation_id: subjects[vi].subject_id.clone(),
        magnitude,
        onset,
        baseline_magnitude,
        baseline_onset,
        models,
    })
}

/// All folds in subject order.
pub fn loocv(subjects: &[SubjectData], config: &LoocvConfig) -> Result<Vec<FoldResult>> {
    (0..subjects.len()).map(|i| run_fold(subjects, i, config)).collect()
}
