//! Reverse-mode gradients checked against independent oracles: central finite
//! differences, the logistic-regression closed form, and batched-vs-looped
//! reductions.

use dpkit::model::{
    backward, backward_scaled, batch_gradient, mean_loss, Activation, Featurizer, FreezeMask,
    HiddenLayer, Model, ModelSpec, Task, TrainStrategy,
};
use dpkit::tensor::Tensor;
use dpkit::Rng;

fn random_input(rng: &mut Rng, positions: usize, dim: usize) -> Tensor<f64> {
    let data = (0..positions * dim).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
    Tensor::from_vec(&[positions, dim], data).unwrap()
}

fn deep_spec(recurrent: Option<usize>) -> ModelSpec {
    ModelSpec {
        featurizer: Featurizer::WindowFeatures { window: 1, dim: 5 },
        hidden_layers: vec![
            HiddenLayer {
                width: 7,
                activation: Activation::Relu,
            },
            HiddenLayer {
                width: 6,
                activation: Activation::Tanh,
            },
        ],
        recurrent_width: recurrent,
        output_classes: 4,
        task: Task::SequenceTagging,
    }
}

/// Central difference of the mean loss with respect to flat trainable entry `idx`.
fn numeric_partial(
    model: &Model<f64>,
    mask: &FreezeMask,
    inputs: &[Tensor<f64>],
    targets: &[usize],
    idx: usize,
    h: f64,
) -> f64 {
    let base = model.trainable_parameters(mask);
    let mut m = model.clone();
    let mut p = base.clone();
    p[idx] = base[idx] + h;
    m.set_trainable_parameters(mask, &p).unwrap();
    let up = mean_loss(&m, inputs, targets).unwrap();
    p[idx] = base[idx] - h;
    m.set_trainable_parameters(mask, &p).unwrap();
    let down = mean_loss(&m, inputs, targets).unwrap();
    (up - down) / (2.0 * h)
}

fn check_finite_differences(spec: &ModelSpec, strategy: TrainStrategy, seed: u64, entries: usize) {
    let mut rng = Rng::new(seed);
    let model: Model<f64> = Model::build(spec, &mut rng).unwrap();
    let mask = model.apply_strategy(strategy).unwrap();
    let f = spec.featurizer;
    let inputs: Vec<_> = (0..3).map(|_| random_input(&mut rng, f.positions(), f.dim())).collect();
    let targets: Vec<usize> = (0..3).map(|_| rng.below(spec.output_classes)).collect();
    let (_, analytic) = batch_gradient(&model, &mask, &inputs, &targets).unwrap();
    assert_eq!(analytic.len(), mask.trainable_len(&model));

    let n = analytic.len();
    let picks: Vec<usize> = if n <= entries {
        (0..n).collect()
    } else {
        (0..entries).map(|_| rng.below(n)).collect()
    };
    for idx in picks {
        let a = analytic.data()[idx];
        let num = numeric_partial(&model, &mask, &inputs, &targets, idx, 1e-6);
        let rel = (a - num).abs() / a.abs().max(1e-8);
        assert!(
            rel < 1e-5,
            "entry {idx}: analytic {a:e} numeric {num:e} rel {rel:e} ({strategy})"
        );
    }
}

#[test]
fn finite_differences_dense_stack() {
    check_finite_differences(&deep_spec(None), TrainStrategy::All, 1, 120);
}

#[test]
fn finite_differences_recurrent_stack() {
    check_finite_differences(&deep_spec(Some(5)), TrainStrategy::All, 2, 120);
}

#[test]
fn finite_differences_under_partial_masks() {
    check_finite_differences(&deep_spec(None), TrainStrategy::LastK(1), 3, 60);
    check_finite_differences(&deep_spec(Some(3)), TrainStrategy::HeadRecurrent, 4, 60);
    check_finite_differences(&deep_spec(Some(3)), TrainStrategy::HeadOnly, 5, 60);
}

#[test]
fn single_linear_layer_matches_closed_form() {
    let spec = ModelSpec {
        featurizer: Featurizer::Dense { dim: 4 },
        hidden_layers: vec![],
        recurrent_width: None,
        output_classes: 3,
        task: Task::Classification,
    };
    let mut rng = Rng::new(10);
    let model: Model<f64> = Model::build(&spec, &mut rng).unwrap();
    let mask = model.apply_strategy(TrainStrategy::All).unwrap();
    let x = random_input(&mut rng, 1, 4);
    let y = 2;
    let grads = backward(&model, &mask, std::slice::from_ref(&x), &[y]).unwrap();
    let g = grads[0].data();

    // Closed form: dW = xᵀ (softmax(xW + b) − onehot(y)), db = softmax − onehot.
    let w = model.groups()[0].weight.data();
    let b = model.groups()[0].bias.data();
    let logits: Vec<f64> = (0..3)
        .map(|c| (0..4).map(|i| x.data()[i] * w[i * 3 + c]).sum::<f64>() + b[c])
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let resid: Vec<f64> = (0..3)
        .map(|c| logits[c].exp() / z - if c == y { 1.0 } else { 0.0 })
        .collect();
    for i in 0..4 {
        for c in 0..3 {
            assert!((g[i * 3 + c] - x.data()[i] * resid[c]).abs() < 1e-10);
        }
    }
    for c in 0..3 {
        assert!((g[12 + c] - resid[c]).abs() < 1e-10);
    }
}

#[test]
fn mean_of_per_example_equals_batch_gradient() {
    for spec in [deep_spec(None), deep_spec(Some(4))] {
        let mut rng = Rng::new(20);
        let model: Model<f64> = Model::build(&spec, &mut rng).unwrap();
        let mask = model.apply_strategy(TrainStrategy::All).unwrap();
        let inputs: Vec<_> = (0..9).map(|_| random_input(&mut rng, 3, 5)).collect();
        let targets: Vec<usize> = (0..9).map(|_| rng.below(4)).collect();
        let per = backward(&model, &mask, &inputs, &targets).unwrap();
        assert_eq!(per.len(), 9);
        let mut mean = Tensor::zeros(per[0].shape());
        for g in &per {
            mean.axpy(1.0 / 9.0, g).unwrap();
        }
        let (_, batch) = batch_gradient(&model, &mask, &inputs, &targets).unwrap();
        for (a, b) in mean.data().iter().zip(batch.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn scaling_the_loss_scales_the_gradient() {
    let spec = deep_spec(Some(3));
    let mut rng = Rng::new(30);
    let model: Model<f64> = Model::build(&spec, &mut rng).unwrap();
    let mask = model.apply_strategy(TrainStrategy::All).unwrap();
    let inputs: Vec<_> = (0..4).map(|_| random_input(&mut rng, 3, 5)).collect();
    let targets = vec![0, 1, 2, 3];
    let (l1, g1) = backward_scaled(&model, &mask, &inputs, &targets, 1.0).unwrap();
    for alpha in [0.5, -3.0, 1e3] {
        let (la, ga) = backward_scaled(&model, &mask, &inputs, &targets, alpha).unwrap();
        assert!((la - alpha * l1).abs() <= 1e-12 * (alpha * l1).abs());
        for (a, b) in ga.data().iter().zip(g1.data()) {
            assert!((a - alpha * b).abs() <= 1e-12 * (alpha * b).abs().max(1e-300));
        }
    }
}

#[test]
fn gradients_are_deterministic() {
    let run = || {
        let spec = deep_spec(Some(3));
        let mut rng = Rng::new(40);
        let model: Model<f64> = Model::build(&spec, &mut rng).unwrap();
        let mask = model.apply_strategy(TrainStrategy::All).unwrap();
        let inputs: Vec<_> = (0..5).map(|_| random_input(&mut rng, 3, 5)).collect();
        let targets = vec![0, 1, 2, 3, 0];
        let logits = model.forward_batch(&inputs).unwrap();
        (logits, backward(&model, &mask, &inputs, &targets).unwrap())
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1, l2);
    for (a, b) in g1.iter().zip(&g2) {
        let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }
}

#[test]
fn masked_gradients_cover_only_trainable_groups() {
    let spec = deep_spec(Some(3));
    let mut rng = Rng::new(50);
    let model: Model<f64> = Model::build(&spec, &mut rng).unwrap();
    let x = random_input(&mut rng, 3, 5);
    let full = model.apply_strategy(TrainStrategy::All).unwrap();
    let (_, g_full) = batch_gradient(&model, &full, std::slice::from_ref(&x), &[1]).unwrap();
    for strategy in [
        TrainStrategy::HeadOnly,
        TrainStrategy::LastK(1),
        TrainStrategy::LastK(2),
        TrainStrategy::HeadRecurrent,
    ] {
        let mask = model.apply_strategy(strategy).unwrap();
        let (_, g) = batch_gradient(&model, &mask, std::slice::from_ref(&x), &[1]).unwrap();
        let expected_len: usize = model
            .groups()
            .iter()
            .zip(mask.flags())
            .filter(|(_, &t)| t)
            .map(|(g, _)| g.len())
            .sum();
        assert_eq!(g.len(), expected_len);

        // The masked gradient is the matching slice of the full gradient.
        let mut offset = 0;
        let mut expected = Vec::new();
        for (grp, &t) in model.groups().iter().zip(mask.flags()) {
            if t {
                expected.extend_from_slice(&g_full.data()[offset..offset + grp.len()]);
            }
            offset += grp.len();
        }
        assert_eq!(g.data(), expected.as_slice());
    }
}

#[test]
fn forward_matches_naive_loop_oracle() {
    let spec = deep_spec(None);
    let mut rng = Rng::new(60);
    let model: Model<f64> = Model::build(&spec, &mut rng).unwrap();
    let x = random_input(&mut rng, 3, 5);

    let dense = |input: &[f64], g: &dpkit::model::ParamGroup<f64>| -> Vec<f64> {
        let (fan_in, fan_out) = (g.weight.shape()[0], g.weight.shape()[1]);
        (0..fan_out)
            .map(|j| {
                let mut acc = g.bias.data()[j];
                for (i, x) in input.iter().enumerate().take(fan_in) {
                    acc += *x * g.weight.data()[i * fan_out + j];
                }
                acc
            })
            .collect()
    };
    let groups = model.groups();
    let mut pooled = vec![0.0; 6];
    for t in 0..3 {
        let h1: Vec<f64> = dense(x.row(t), &groups[0]).into_iter().map(|v| v.max(0.0)).collect();
        let h2: Vec<f64> = dense(&h1, &groups[1]).into_iter().map(f64::tanh).collect();
        for (p, v) in pooled.iter_mut().zip(h2) {
            *p += v / 3.0;
        }
    }
    let expect = dense(&pooled, &groups[2]);
    let got = model.forward(&x).unwrap();
    for (a, b) in got.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn shape_mismatch_is_an_argument_error() {
    let spec = deep_spec(None);
    let model: Model<f64> = Model::build(&spec, &mut Rng::new(1)).unwrap();
    let mask = model.apply_strategy(TrainStrategy::All).unwrap();
    let bad = Tensor::zeros(&[2, 5]);
    assert!(backward(&model, &mask, &[bad], &[0]).is_err());
    assert!(backward(&model, &mask, &[], &[]).is_err());
    let ok = Tensor::zeros(&[3, 5]);
    assert!(backward(&model, &mask, std::slice::from_ref(&ok), &[4]).is_err());
    assert!(backward(&model, &mask, &[ok], &[0, 1]).is_err());
}

#[test]
fn f32_gradients_track_f64() {
    let spec = deep_spec(Some(3));
    let mut rng = Rng::new(70);
    let model: Model<f64> = Model::build(&spec, &mut rng).unwrap();
    let m32: Model<f32> = Model::build(&spec, &mut Rng::new(70)).unwrap();
    let mask = model.apply_strategy(TrainStrategy::All).unwrap();
    let x = random_input(&mut rng, 3, 5);
    let (_, g64) = batch_gradient(&model, &mask, std::slice::from_ref(&x), &[2]).unwrap();
    let (_, g32) = batch_gradient(&m32, &mask, &[x.cast::<f32>()], &[2]).unwrap();
    for (a, b) in g64.data().iter().zip(g32.data()) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}
