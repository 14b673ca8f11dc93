//! Forward pass with activation caching, and reverse-mode gradients of the
//! softmax cross-entropy loss.
//!
//! A batch of `B` examples, each `[P, d]`, is stacked into a `[B·P, d]`
//! matrix so the position-wise hidden layers are plain matrix products. Row
//! `b·P + t` holds position `t` of example `b`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{FreezeMask, GroupKind, Model};

pub(crate) struct ForwardCache<T> {
    batch: usize,
    positions: usize,
    /// `[0]` is the stacked input; `[i + 1]` the post-activation output of hidden layer `i`.
    activations: Vec<Tensor<T>>,
    /// `h_0 ..= h_P`, each `[B, width]`; empty without a recurrent layer.
    states: Vec<Tensor<T>>,
    /// Input to the output layer, `[B, width]`.
    pooled: Tensor<T>,
    pub(crate) logits: Tensor<T>,
}

fn gather_position<T: Scalar>(stacked: &Tensor<T>, positions: usize, t: usize) -> Tensor<T> {
    let width = stacked.cols();
    let batch = stacked.rows() / positions;
    let mut data = Vec::with_capacity(batch * width);
    for b in 0..batch {
        data.extend_from_slice(stacked.row(b * positions + t));
    }
    Tensor::from_vec(&[batch, width], data).expect("gathered rows have matrix shape")
}

pub(crate) fn forward<T: Scalar>(model: &Model<T>, inputs: &[&Tensor<T>]) -> Result<ForwardCache<T>> {
    let spec = model.spec();
    let positions = spec.featurizer.positions();
    let dim = spec.featurizer.dim();
    let batch = inputs.len();
    let mut stacked = Vec::with_capacity(batch * positions * dim);
    for x in inputs {
        model.check_input(x)?;
        stacked.extend_from_slice(x.data());
    }
    let mut activations = vec![Tensor::from_vec(&[batch * positions, dim], stacked)?];

    let groups = model.groups();
    let mut gi = 0;
    while let GroupKind::Hidden(act) = groups[gi].kind {
        let g = &groups[gi];
        let mut h = activations[gi].matmul(&g.weight)?;
        h.add_row(g.bias.data())?;
        let h = h.map(|v| act.apply(v));
        activations.push(h);
        gi += 1;
    }

    let last = activations.last().expect("input is always present");
    let mut states = Vec::new();
    let pooled = if groups[gi].kind == GroupKind::Recurrent {
        let g = &groups[gi];
        let width = g.bias.len();
        let wh = g.recurrent.as_ref().expect("recurrent group carries hidden weights");
        states.push(Tensor::zeros(&[batch, width]));
        for t in 0..positions {
            let xt = gather_position(last, positions, t);
            let mut a = xt.matmul(&g.weight)?;
            let hh = states[t].matmul(wh)?;
            a.add_assign(&hh)?;
            a.add_row(g.bias.data())?;
            states.push(a.map(|v| v.tanh()));
        }
        gi += 1;
        states.last().cloned().expect("at least one position")
    } else {
        let width = last.cols();
        let inv = T::one() / T::from_usize(positions).expect("position count fits in a Scalar");
        let mut data = vec![T::zero(); batch * width];
        for b in 0..batch {
            let out = &mut data[b * width..(b + 1) * width];
            for t in 0..positions {
                for (o, &v) in out.iter_mut().zip(last.row(b * positions + t)) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o *= inv);
        }
        Tensor::from_vec(&[batch, width], data)?
    };

    let out = &groups[gi];
    debug_assert_eq!(out.kind, GroupKind::Output);
    let mut logits = pooled.matmul(&out.weight)?;
    logits.add_row(out.bias.data())?;

    Ok(ForwardCache {
        batch,
        positions,
        activations,
        states,
        pooled,
        logits,
    })
}

/// Row-wise softmax probabilities and the summed cross-entropy against `targets`.
fn softmax_xent<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> (Tensor<T>, T) {
    let k = logits.cols();
    let mut probs = Vec::with_capacity(logits.len());
    let mut loss = T::zero();
    for (b, &y) in targets.iter().enumerate() {
        let row = logits.row(b);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: T = exps.iter().copied().sum();
        loss += z.ln() + max - row[y];
        probs.extend(exps.into_iter().map(|e| e / z));
    }
    (Tensor::from_vec(&[targets.len(), k], probs).expect("softmax keeps shape"), loss)
}

fn check_batch<T: Scalar>(model: &Model<T>, inputs: &[Tensor<T>], targets: &[usize]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::arg("batch is empty"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::Shape {
            expected: vec![inputs.len()],
            actual: vec![targets.len()],
        });
    }
    let k = model.spec().output_classes;
    if let Some(&bad) = targets.iter().find(|&&y| y >= k) {
        return Err(Error::arg(format!("target class {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Mean softmax cross-entropy over a batch.
pub fn mean_loss<T: Scalar>(model: &Model<T>, inputs: &[Tensor<T>], targets: &[usize]) -> Result<T> {
    check_batch(model, inputs, targets)?;
    let refs: Vec<&Tensor<T>> = inputs.iter().collect();
    let cache = forward(model, &refs)?;
    let (_, loss) = softmax_xent(&cache.logits, targets);
    Ok(loss / T::from_usize(targets.len()).expect("batch size fits"))
}

struct GroupGrad<T> {
    weight: Tensor<T>,
    recurrent: Option<Tensor<T>>,
    bias: Vec<T>,
}

/// Loss `scale · mean cross-entropy` over the batch and its gradient with
/// respect to the trainable groups, flattened in declaration order.
pub fn backward_scaled<T: Scalar>(
    model: &Model<T>,
    mask: &FreezeMask,
    inputs: &[Tensor<T>],
    targets: &[usize],
    scale: T,
) -> Result<(T, Tensor<T>)> {
    check_batch(model, inputs, targets)?;
    let groups = model.groups();
    mask.check(groups.len())?;
    let refs: Vec<&Tensor<T>> = inputs.iter().collect();
    let cache = forward(model, &refs)?;
    let batch = cache.batch;
    let positions = cache.positions;
    let bscale = scale / T::from_usize(batch).expect("batch size fits");

    let (mut dlogits, loss) = softmax_xent(&cache.logits, targets);
    let k = dlogits.cols();
    for (b, &y) in targets.iter().enumerate() {
        dlogits.data_mut()[b * k + y] -= T::one();
    }
    dlogits.scale(bscale);

    let lowest = mask
        .flags()
        .iter()
        .position(|&f| f)
        .expect("mask checked to have a trainable group");
    let mut grads: Vec<Option<GroupGrad<T>>> = (0..groups.len()).map(|_| None).collect();

    let oi = groups.len() - 1;
    if mask.is_trainable(oi) {
        grads[oi] = Some(GroupGrad {
            weight: cache.pooled.matmul_tn(&dlogits)?,
            recurrent: None,
            bias: dlogits.sum_rows()?,
        });
    }
    if lowest < oi {
        let dpooled = dlogits.matmul_nt(&groups[oi].weight)?;
        let hidden_count = cache.activations.len() - 1;
        let last = &cache.activations[hidden_count];
        let width = last.cols();
        let mut dlast = Tensor::zeros(&[batch * positions, width]);

        if groups[oi - 1].kind == GroupKind::Recurrent {
            let ri = oi - 1;
            let g = &groups[ri];
            let wh = g.recurrent.as_ref().expect("recurrent group carries hidden weights");
            let rwidth = g.bias.len();
            let mut dwx = Tensor::zeros(g.weight.shape());
            let mut dwh = Tensor::zeros(wh.shape());
            let mut db = vec![T::zero(); rwidth];
            let mut dh = dpooled;
            for t in (0..positions).rev() {
                let h = &cache.states[t + 1];
                let mut da = dh;
                for (d, &hv) in da.data_mut().iter_mut().zip(h.data()) {
                    *d *= T::one() - hv * hv;
                }
                if mask.is_trainable(ri) {
                    let xt = gather_position(last, positions, t);
                    dwx.add_assign(&xt.matmul_tn(&da)?)?;
                    dwh.add_assign(&cache.states[t].matmul_tn(&da)?)?;
                    for (acc, v) in db.iter_mut().zip(da.sum_rows()?) {
                        *acc += v;
                    }
                }
                if lowest < ri {
                    let dx = da.matmul_nt(&g.weight)?;
                    for b in 0..batch {
                        let row = (b * positions + t) * width;
                        dlast.data_mut()[row..row + width].copy_from_slice(dx.row(b));
                    }
                }
                dh = da.matmul_nt(wh)?;
            }
            if mask.is_trainable(ri) {
                grads[ri] = Some(GroupGrad {
                    weight: dwx,
                    recurrent: Some(dwh),
                    bias: db,
                });
            }
        } else {
            let inv = T::one() / T::from_usize(positions).expect("position count fits");
            for b in 0..batch {
                for t in 0..positions {
                    let row = (b * positions + t) * width;
                    for (d, &v) in dlast.data_mut()[row..row + width].iter_mut().zip(dpooled.row(b)) {
                        *d = v * inv;
                    }
                }
            }
        }

        // Position-wise hidden layers, deepest first, stopping below the lowest trainable one.
        let mut dout = dlast;
        for i in (lowest..hidden_count).rev() {
            let g = &groups[i];
            let GroupKind::Hidden(act) = g.kind else {
                unreachable!("groups below the head are hidden layers");
            };
            let out = &cache.activations[i + 1];
            for (d, &y) in dout.data_mut().iter_mut().zip(out.data()) {
                *d *= act.derivative_from_output(y);
            }
            if mask.is_trainable(i) {
                grads[i] = Some(GroupGrad {
                    weight: cache.activations[i].matmul_tn(&dout)?,
                    recurrent: None,
                    bias: dout.sum_rows()?,
                });
            }
            if i > lowest {
                dout = dout.matmul_nt(&g.weight)?;
            }
        }
    }

    let mut flat = Vec::with_capacity(mask.trainable_len(model));
    for (i, g) in grads.into_iter().enumerate() {
        if !mask.is_trainable(i) {
            continue;
        }
        let g = g.expect("every trainable group receives a gradient");
        flat.extend_from_slice(g.weight.data());
        if let Some(r) = g.recurrent {
            flat.extend_from_slice(r.data());
        }
        flat.extend_from_slice(&g.bias);
    }
    Ok((loss * bscale, Tensor::vector(flat)))
}

/// Gradient of the mean batch loss over the trainable groups.
pub fn batch_gradient<T: Scalar>(
    model: &Model<T>,
    mask: &FreezeMask,
    inputs: &[Tensor<T>],
    targets: &[usize],
) -> Result<(T, Tensor<T>)> {
    backward_scaled(model, mask, inputs, targets, T::one())
}

/// Per-example gradients over the trainable groups, one vector per example,
/// computed by running each example through reverse mode on its own. Results
/// come back in input order.
pub fn backward<T: Scalar>(
    model: &Model<T>,
    mask: &FreezeMask,
    inputs: &[Tensor<T>],
    targets: &[usize],
) -> Result<Vec<Tensor<T>>> {
    check_batch(model, inputs, targets)?;
    inputs
        .iter()
        .zip(targets)
        .map(|(x, &y)| {
            backward_scaled(model, mask, std::slice::from_ref(x), &[y], T::one()).map(|(_, g)| g)
        })
        .collect()
}
