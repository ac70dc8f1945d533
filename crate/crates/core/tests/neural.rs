use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphrtf::neural::{
    loocv, train, LoocvConfig, MagnitudeArch, Model, OnsetArch, OnsetData, OnsetNet, OnsetProblem, Params,
    Standardizer, SubjectData, TrainConfig,
};

fn small_config(epochs: usize) -> LoocvConfig {
    let t = TrainConfig {
        batch_size: 16,
        epochs,
        learning_rate: 1e-2,
        seed: 3,
    };
    LoocvConfig {
        magnitude_train: t.clone(),
        onset_train: t,
        magnitude_arch: MagnitudeArch {
            input_len: 19,
            encoder_channels: vec![3, 4, 5],
            encoder_strides: vec![2, 1],
            kernel: 3,
            anthro_dim: 3,
            anthro_embed: 4,
            freq_dim: 5,
            freq_embed: 3,
            ear_embed: 3,
            fusion: 16,
            decoder_channels: vec![2, 3, 1],
        },
        onset_arch: OnsetArch {
            anthro_dim: 3,
            anthro_embed: 4,
            ear_embed: 3,
            fusion: 12,
            kernel: 3,
            decoder_channels: vec![2, 3, 1],
            output_len: 5,
        },
        ..LoocvConfig::default()
    }
}

fn subject(i: usize, rng: &mut ChaCha8Rng) -> SubjectData {
    let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    SubjectData {
        subject_id: format!("S{i}"),
        ear_sch: [v(57), v(57)],
        anthro: v(3),
        magnitude: [(0..5).map(|_| v(8)).collect(), (0..5).map(|_| v(8)).collect()],
        onset: [v(5), v(5)],
    }
}

#[test]
fn one_fold_per_subject_with_next_as_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let subjects: Vec<SubjectData> = (0..4).map(|i| subject(i, &mut rng)).collect();
    let folds = loocv(&subjects, &small_config(3)).unwrap();
    assert_eq!(folds.len(), 4);
    for (i, f) in folds.iter().enumerate() {
        assert_eq!(f.subject_id, format!("S{i}"));
        assert_eq!(f.validation_id, format!("S{}", (i + 1) % 4));
        assert_eq!(f.magnitude[1].len(), 5);
        assert_eq!(f.onset[0].len(), 5);
    }
}

#[test]
fn identical_subjects_are_predicted_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let one = subject(0, &mut rng);
    let subjects: Vec<SubjectData> = (0..4)
        .map(|i| SubjectData {
            subject_id: format!("D{i}"),
            ..one.clone()
        })
        .collect();
    let f = &loocv(&subjects, &small_config(20)).unwrap()[2];
    for e in 0..2 {
        for (p, t) in f.magnitude[e].iter().flatten().zip(one.magnitude[e].iter().flatten()) {
            assert!((p - t).abs() < 1e-5, "{p} {t}");
        }
        for (p, t) in f.baseline_onset[e].iter().zip(&one.onset[e]) {
            assert!((p - t).abs() < 1e-12);
        }
    }
}

#[test]
fn standardizer_scales_signal_and_passes_noise() {
    let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![10.0 + i as f64, 5.0 + 1e-9 * i as f64, -3.0]).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let s = Standardizer::fit(&refs).unwrap();
    let z: Vec<Vec<f32>> = rows.iter().map(|r| s.apply(r)).collect();
    let mean: f32 = z.iter().map(|r| r[0]).sum::<f32>() / 6.0;
    let var: f32 = z.iter().map(|r| (r[0] - mean).powi(2)).sum::<f32>() / 6.0;
    assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-5);
    assert!(z.iter().all(|r| r[1].abs() < 1e-6 && r[2] == 0.0));
    assert!(Standardizer::fit(&[&[1.0, 2.0][..], &[1.0][..]]).is_err());
}

fn onset_problem_data(seed: u64) -> (OnsetNet, OnsetData<f64>) {
    let arch = small_config(1).onset_arch;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<(Vec<f64>, usize)> = (0..24)
        .map(|i| ((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(), i % 2))
        .collect();
    // a smooth function of the inputs
    let targets = inputs
        .iter()
        .map(|(a, e)| (0..5).map(|k| (a[0] * k as f64).sin() + 0.5 * a[1] - 0.3 * *e as f64).collect())
        .collect();
    (OnsetNet::new(arch).unwrap(), OnsetData { inputs, targets })
}

fn spearman(v: &[f64]) -> f64 {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut rank = vec![0.0; n];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r as f64;
    }
    let m = (n as f64 - 1.0) / 2.0;
    let num: f64 = (0..n).map(|i| (i as f64 - m) * (rank[i] - m)).sum();
    let den: f64 = (0..n).map(|i| (i as f64 - m).powi(2)).sum();
    num / den
}

#[test]
fn two_seeds_differ_but_both_decrease() {
    let (net, data) = onset_problem_data(5);
    let model = OnsetProblem { net: &net, data: &data };
    let run = |seed: u64| {
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 150,
            learning_rate: 3e-3,
            seed,
        };
        train::<f64, _, OnsetProblem<f64>>(&model, None, net.init(seed), &cfg).unwrap().history.train
    };
    let (a, b) = (run(1), run(2));
    assert_ne!(a, b);
    for h in [&a, &b] {
        let rho = spearman(h);
        assert!(rho < -0.8, "{rho}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The batch gradient is the mean of per-row gradients.
    #[test]
    fn batch_gradient_is_linear_in_rows(seed in any::<u64>(), i in 0usize..24, j in 0usize..24) {
        let (net, data) = onset_problem_data(seed % 7);
        let model = OnsetProblem { net: &net, data: &data };
        let p: Params<f64> = net.init(seed);
        let (li, gi) = model.loss_and_grad(&p, &[i]).unwrap();
        let (lj, gj) = model.loss_and_grad(&p, &[j]).unwrap();
        let (l, g) = model.loss_and_grad(&p, &[i, j]).unwrap();
        prop_assert!((l - 0.5 * (li + lj)).abs() < 1e-12 * (1.0 + l));
        for ((a, b), c) in g.tensors.iter().zip(&gi.tensors).zip(&gj.tensors) {
            for k in 0..a.data.len() {
                prop_assert!((a.data[k] - 0.5 * (b.data[k] + c.data[k])).abs() < 1e-10);
            }
        }
        let (ld, gd) = model.loss_and_grad(&p, &[i, i]).unwrap();
        prop_assert!((ld - li).abs() < 1e-12 * (1.0 + li));
        for (a, b) in gd.tensors.iter().zip(&gi.tensors) {
            for k in 0..a.data.len() {
                prop_assert!((a.data[k] - b.data[k]).abs() < 1e-12);
            }
        }
    }
}
