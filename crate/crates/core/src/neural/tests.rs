use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn small_magnitude() -> MagnitudeArch {
    MagnitudeArch {
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
    }
}

fn small_onset() -> OnsetArch {
    OnsetArch {
        anthro_dim: 3,
        anthro_embed: 4,
        ear_embed: 3,
        fusion: 12,
        kernel: 3,
        decoder_channels: vec![2, 3, 1],
        output_len: 5,
    }
}

fn randv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random init with small positive biases so most ReLUs are active.
fn draw(shapes: &[Vec<usize>], seed: u64) -> Params<f64> {
    let mut p = Params::<f64>::init(shapes, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for (i, t) in p.tensors.iter_mut().enumerate() {
        if i % 2 == 1 {
            t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.2..0.5));
        }
    }
    p
}

fn magnitude_data(arch: &MagnitudeArch, rng: &mut ChaCha8Rng) -> MagnitudeData<f64> {
    let groups: Vec<EarInput<f64>> = (0..3)
        .map(|g| EarInput {
            sch_xyz: randv(rng, 3 * arch.input_len),
            anthro: randv(rng, arch.anthro_dim),
            ear: g % 2,
        })
        .collect();
    let rows = vec![(0, 0), (0, 3), (1, 3), (2, 1), (1, 4), (2, 0)];
    let targets = rows.iter().map(|_| randv(rng, arch.output_len())).collect();
    MagnitudeData { groups, rows, targets }
}

/// Max elementwise relative error of analytic vs central differences.
fn grad_error<M: Model<f64>>(model: &M, params: &Params<f64>, rows: &[usize]) -> f64 {
    let (_, g) = model.loss_and_grad(params, rows).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (ti, t) in params.tensors.iter().enumerate() {
        for k in 0..t.data.len() {
            let mut p = params.clone();
            p.tensors[ti].data[k] += eps;
            let up = model.loss(&p, rows).unwrap();
            p.tensors[ti].data[k] -= 2.0 * eps;
            let dn = model.loss(&p, rows).unwrap();
            let fd = (up - dn) / (2.0 * eps);
            let an = g.tensors[ti].data[k];
            let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn magnitude_gradient_matches_finite_differences() {
    let arch = small_magnitude();
    let net = MagnitudeNet::new(arch.clone()).unwrap();
    for draw_seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + draw_seed);
        let data = magnitude_data(&arch, &mut rng);
        let params = draw(&arch.shapes(), draw_seed);
        let model = MagnitudeProblem { net: &net, data: &data };
        let err = grad_error(&model, &params, &[0, 1, 2, 3, 4, 5, 1]);
        assert!(err < 1e-4, "draw {draw_seed}: {err}");
    }
}

#[test]
fn onset_gradient_matches_finite_differences() {
    let arch = small_onset();
    let net = OnsetNet::new(arch.clone()).unwrap();
    for draw_seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + draw_seed);
        let data = OnsetData {
            inputs: (0..4).map(|i| (randv(&mut rng, 3), i % 2)).collect(),
            targets: (0..4).map(|_| randv(&mut rng, 5)).collect(),
        };
        let params = draw(&arch.shapes(), draw_seed);
        let model = OnsetProblem { net: &net, data: &data };
        let err = grad_error(&model, &params, &[0, 1, 2, 3]);
        assert!(err < 1e-4, "draw {draw_seed}: {err}");
    }
}

#[test]
fn batch_loss_is_mean_of_sample_mse() {
    let arch = small_magnitude();
    let net = MagnitudeNet::new(arch.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = magnitude_data(&arch, &mut rng);
    let params = draw(&arch.shapes(), 3);
    let model = MagnitudeProblem { net: &net, data: &data };
    let rows = [0, 2, 5];
    let mut expect = 0.0;
    for &r in &rows {
        let (g, f) = data.rows[r];
        let grp = &data.groups[g];
        let mut fo = vec![0.0; arch.freq_dim];
        fo[f] = 1.0;
        let mut eo = vec![0.0; 2];
        eo[grp.ear] = 1.0;
        let input = MagnitudeNetInput {
            sch_xyz: grp.sch_xyz.clone(),
            anthro: grp.anthro.clone(),
            freq_onehot: fo,
            ear_onehot: eo,
        };
        let y = net.forward(&params, &input).unwrap();
        expect += loss_mse(&y, &data.targets[r]).unwrap();
    }
    let got = model.loss(&params, &rows).unwrap();
    assert!((got - expect / 3.0).abs() < 1e-12);
}

#[test]
fn zero_loss_has_zero_gradient() {
    let arch = small_onset();
    let net = OnsetNet::new(arch.clone()).unwrap();
    let params = draw(&arch.shapes(), 1);
    let inputs = vec![(vec![0.3, -0.1, 0.7], 0), (vec![0.2, 0.4, -0.5], 1)];
    let targets = inputs.iter().map(|(a, e)| net.predict(&params, a, *e).unwrap()).collect();
    let data = OnsetData { inputs, targets };
    let (l, g) = OnsetProblem { net: &net, data: &data }.loss_and_grad(&params, &[0, 1]).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.tensors.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
}

#[test]
fn default_shapes_and_output_lengths() {
    let mnet = MagnitudeNet::new(MagnitudeArch::default()).unwrap();
    let p = mnet.init(0);
    assert_eq!(mnet.arch().concat_dim(), 128);
    assert_eq!(p.tensors[12].shape, vec![32, 13]);
    assert_eq!(p.tensors[18].shape, vec![256, 128]);
    let input = MagnitudeNetInput {
        sch_xyz: vec![0.1; 3 * 441],
        anthro: vec![0.2; 13],
        freq_onehot: (0..41).map(|i| if i == 5 { 1.0 } else { 0.0 }).collect(),
        ear_onehot: vec![0.0, 1.0],
    };
    let a = mnet.forward(&p, &input).unwrap();
    assert_eq!(a.len(), 64);
    let mut other = input.clone();
    other.ear_onehot = vec![1.0, 0.0];
    assert_ne!(a, mnet.forward(&p, &other).unwrap());
    assert_eq!(a, mnet.forward(&p, &input).unwrap());

    let onet = OnsetNet::new(OnsetArch::default()).unwrap();
    let p = onet.init(0);
    let y = onet
        .forward(&p, &OnsetNetInput { anthro: vec![0.5; 13], ear_onehot: vec![1.0, 0.0] })
        .unwrap();
    assert_eq!(y.len(), 36);
}

#[test]
fn zero_weights_give_output_bias() {
    let onet = OnsetNet::new(OnsetArch::default()).unwrap();
    let mut p = Params::<f64>::zeros_like(&onet.arch().shapes());
    let last = p.tensors.len() - 1;
    for (i, v) in p.tensors[last].data.iter_mut().enumerate() {
        *v = i as f64 * 0.25 - 3.0;
    }
    let y = onet
        .forward(&p, &OnsetNetInput { anthro: vec![0.0; 13], ear_onehot: vec![0.0, 1.0] })
        .unwrap();
    assert_eq!(y, p.tensors[last].data);

    let mnet = MagnitudeNet::new(MagnitudeArch::default()).unwrap();
    let p = Params::<f64>::zeros_like(&mnet.arch().shapes());
    let input = MagnitudeNetInput {
        sch_xyz: vec![0.0; 3 * 441],
        anthro: vec![0.0; 13],
        freq_onehot: (0..41).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
        ear_onehot: vec![1.0, 0.0],
    };
    assert!(mnet.forward(&p, &input).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_rejects_bad_shapes() {
    let onet = OnsetNet::new(OnsetArch::default()).unwrap();
    let p = onet.init(0);
    assert!(onet.forward(&p, &OnsetNetInput { anthro: vec![0.0; 12], ear_onehot: vec![1.0, 0.0] }).is_err());
    assert!(onet.forward(&p, &OnsetNetInput { anthro: vec![0.0; 13], ear_onehot: vec![1.0, 1.0] }).is_err());
    let mnet = MagnitudeNet::new(MagnitudeArch::default()).unwrap();
    assert!(onet.forward(&mnet.init(0), &OnsetNetInput { anthro: vec![0.0; 13], ear_onehot: vec![1.0, 0.0] }).is_err());
}

#[test]
fn mse_examples() {
    assert_eq!(loss_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert_eq!(loss_mse(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    assert_eq!(loss_mse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5);
    assert!(loss_mse(&[0.0], &[3.0, 4.0]).is_err());
}

#[test]
fn adam_first_step_moves_by_lr_times_sign() {
    let shapes = vec![vec![4]];
    let mut p = Params::<f64>::zeros_like(&shapes);
    let g = Params {
        tensors: vec![Tensor::from_vec(&[4], vec![3.0, -0.01, 250.0, -7.5]).unwrap()],
    };
    let mut adam = Adam::new(&shapes);
    adam.step(&mut p, &g, 1e-3).unwrap();
    for (&x, &gv) in p.tensors[0].data.iter().zip(&g.tensors[0].data) {
        assert!((x + 1e-3 * gv.signum()).abs() < 1e-9, "{x}");
    }
    let before = p.clone();
    adam.step(&mut p, &Params::zeros_like(&shapes), 1e-3).unwrap();
    let mut fresh = Adam::new(&shapes);
    let mut q = before.clone();
    fresh.step(&mut q, &Params::zeros_like(&shapes), 1e-3).unwrap();
    assert_eq!(q, before);
}

#[test]
fn adam_rejects_non_finite() {
    let shapes = vec![vec![2], vec![1]];
    let mut p = Params::<f64>::zeros_like(&shapes);
    let mut g = Params::<f64>::zeros_like(&shapes);
    g.tensors[1].data[0] = f64::NAN;
    let mut adam = Adam::new(&shapes);
    assert!(matches!(adam.step(&mut p, &g, 1e-3), Err(crate::Error::NonFiniteGradient { tensor: 1 })));
    assert_eq!(adam.steps(), 0);
}

#[test]
fn params_file_round_trip() {
    let p: Params<f32> = MagnitudeNet::new(small_magnitude()).unwrap().init(9).cast();
    let q = Params::<f32>::from_bytes(&p.to_bytes()).unwrap();
    assert_eq!(p, q);
    let mut bad = p.to_bytes();
    bad[0] = b'X';
    assert!(Params::<f32>::from_bytes(&bad).is_err());
}

fn onset_fixture() -> (OnsetNet, OnsetData<f64>) {
    let arch = small_onset();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = OnsetData {
        inputs: (0..8).map(|i| (randv(&mut rng, 3), i % 2)).collect(),
        targets: (0..8).map(|_| randv(&mut rng, 5)).collect(),
    };
    (OnsetNet::new(arch).unwrap(), data)
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let (net, data) = onset_fixture();
    let model = OnsetProblem { net: &net, data: &data };
    let cfg = TrainConfig { batch_size: 3, epochs: 5, learning_rate: 0.0, seed: 1 };
    let out = train::<f64, _, OnsetProblem<f64>>(&model, None, net.init(2), &cfg).unwrap();
    let h = &out.history.train;
    assert!(h.iter().all(|&v| (v - h[0]).abs() < 1e-12 * h[0]));
}

#[test]
fn snapshot_has_minimum_validation_loss() {
    let (net, data) = onset_fixture();
    let (tr, va) = (
        OnsetData { inputs: data.inputs[..6].to_vec(), targets: data.targets[..6].to_vec() },
        OnsetData { inputs: data.inputs[6..].to_vec(), targets: data.targets[6..].to_vec() },
    );
    let cfg = TrainConfig { batch_size: 4, epochs: 60, learning_rate: 1e-2, seed: 3 };
    let val = OnsetProblem { net: &net, data: &va };
    let out = train(&OnsetProblem { net: &net, data: &tr }, Some(&val), net.init(0), &cfg).unwrap();
    let min = out.history.val.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(out.history.val[out.best_epoch], min);
    assert_eq!(val.loss(&out.params, &[0, 1]).unwrap(), min);
    let again = train(&OnsetProblem { net: &net, data: &tr }, Some(&val), net.init(0), &cfg).unwrap();
    assert_eq!(again.params, out.params);
    assert_eq!(again.history, out.history);
    assert!(out.history.to_csv().starts_with("epoch,train_loss,val_loss\n1,"));
}

#[test]
fn empty_dataset_is_rejected() {
    let (net, _) = onset_fixture();
    let empty = OnsetData { inputs: vec![], targets: vec![] };
    let r = train::<f64, _, OnsetProblem<f64>>(&OnsetProblem { net: &net, data: &empty }, None, net.init(0), &TrainConfig::default());
    assert!(matches!(r, Err(crate::Error::EmptyDataset)));
}
