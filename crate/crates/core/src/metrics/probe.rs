use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Graph, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Hidden width of the nonlinear probe.
pub const PROBE_HIDDEN: usize = 128;
const PROBE_STEPS: usize = 400;
const PROBE_LR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Linear,
    Nonlinear,
}

/// Held-out scores of one probe. `flagged` explains why a factor was not scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub average_precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub classes: usize,
    pub flagged: Option<String>,
}

/// Row-major sample matrix `[n, dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not form rows of width {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn select(&self, idx: &[usize]) -> Samples {
        Samples { dim: self.dim, data: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect() }
    }
}

/// Seeded split into `(train, test)` index lists; the test part holds
/// `round(n · test_fraction)` items, at least one when `n >= 2`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = ((n as f64) * test_fraction).round() as usize;
    if n >= 2 {
        test = test.clamp(1, n - 1);
    }
    let train = idx.split_off(test.min(n));
    let mut test_idx = idx;
    test_idx.sort_unstable();
    let mut train = train;
    train.sort_unstable();
    (train, test_idx)
}

/// Non-interpolated average precision, `Σ (R_k − R_{k−1}) · P_k` over the
/// ranking by decreasing score. Tied scores form one threshold.
/// `None` when there are no positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let total = positive.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            tp += positive[order[j]] as usize;
            seen += 1;
            j += 1;
        }
        let recall = tp as f64 / total as f64;
        ap += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
        i = j;
    }
    Some(ap)
}

fn standardize(train: &Samples, other: &Samples) -> (Samples, Samples) {
    let (n, d) = (train.len().max(1) as f64, train.dim);
    let mean: Vec<f64> = (0..d).map(|j| (0..train.len()).map(|i| train.row(i)[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let v = (0..train.len()).map(|i| (train.row(i)[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 1e-12 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let apply = |s: &Samples| Samples {
        dim: d,
        data: s.data.iter().enumerate().map(|(i, &v)| (v - mean[i % d]) / std[i % d]).collect(),
    };
    (apply(train), apply(other))
}

/// Trains a softmax classifier (`Linear`) or a one-hidden-layer ReLU network
/// with [`PROBE_HIDDEN`] units (`Nonlinear`) on the `train` rows and scores
/// the `test` rows with macro-averaged one-vs-rest average precision and accuracy.
pub fn probe(
    x: &Samples,
    labels: &[usize],
    classes: usize,
    train: &[usize],
    test: &[usize],
    kind: ProbeKind,
    seed: u64,
) -> Result<ProbeScore> {
    if labels.len() != x.len() {
        return Err(Error::Shape(format!("{} labels for {} samples", labels.len(), x.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
    }
    let flag = |why: String| Ok(ProbeScore { average_precision: None, accuracy: None, classes, flagged: Some(why) });
    if train.is_empty() || test.is_empty() {
        return flag("empty train or test split".into());
    }
    let mut present = vec![false; classes];
    for &i in train {
        present[labels[i]] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return flag(format!("class {missing} absent from the training split"));
    }

    let (xtr, xte) = standardize(&x.select(train), &x.select(test));
    let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let yte: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let params = fit(&xtr, &ytr, classes, kind, seed)?;
    let probs = predict(&params, &xte, classes, kind)?;

    let correct = (0..yte.len())
        .filter(|&i| {
            let row = &probs[i * classes..(i + 1) * classes];
            let best = (0..classes).fold(0, |b, c| if row[c] > row[b] { c } else { b });
            best == yte[i]
        })
        .count();
    let aps: Vec<f64> = (0..classes)
        .filter_map(|c| {
            let scores: Vec<f64> = (0..yte.len()).map(|i| probs[i * classes + c]).collect();
            let pos: Vec<bool> = yte.iter().map(|&y| y == c).collect();
            average_precision(&scores, &pos)
        })
        .collect();
    Ok(ProbeScore {
        average_precision: (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64),
        accuracy: Some(correct as f64 / yte.len() as f64),
        classes,
        flagged: None,
    })
}

fn init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    use rand::Rng;
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(&[rows, cols], |_| rng.random_range(-limit..limit))
}

fn fit(x: &Samples, y: &[usize], classes: usize, kind: ProbeKind, seed: u64) -> Result<ParamStore<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    match kind {
        ProbeKind::Linear => {
            store.add("w", init(x.dim, classes, &mut rng));
            store.add("b", Tensor::zeros(&[classes]));
        }
        ProbeKind::Nonlinear => {
            store.add("w0", init(x.dim, PROBE_HIDDEN, &mut rng));
            store.add("b0", Tensor::zeros(&[PROBE_HIDDEN]));
            store.add("w1", init(PROBE_HIDDEN, classes, &mut rng));
            store.add("b1", Tensor::zeros(&[classes]));
        }
    }
    let n = x.len();
    let inputs = Tensor::new(&[n, x.dim], x.data.clone())?;
    let onehot = Tensor::from_fn(&[n, classes], |i| if y[i / classes] == i % classes { 1.0 } else { 0.0 });
    let mut adam = AdamState::new(&store);
    for _ in 0..PROBE_STEPS {
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let xv = g.constant(inputs.clone());
        let probs = forward(&mut g, bound.vars(), xv, kind)?;
        let t = g.constant(onehot.clone());
        let logp = g.add_scalar(probs, 1e-12);
        let logp = g.ln(logp);
        let picked = g.mul(logp, t)?;
        let total = g.sum(picked);
        let loss = g.scale(total, -1.0 / n as f64);
        g.backward(loss)?;
        let grads = store.gradients(&g, &bound);
        adam.update(&mut store, &grads, PROBE_LR)?;
    }
    Ok(store)
}

fn forward(
    g: &mut Graph<f64>,
    p: &[crate::autodiff::Var],
    x: crate::autodiff::Var,
    kind: ProbeKind,
) -> Result<crate::autodiff::Var> {
    let affine = |g: &mut Graph<f64>, x, w, b| -> Result<_> {
        let y = g.matmul(x, w)?;
        let out_dim = g.shape(b)[0];
        let b = g.reshape(b, &[1, out_dim])?;
        g.add(y, b)
    };
    let logits = match kind {
        ProbeKind::Linear => affine(g, x, p[0], p[1])?,
        ProbeKind::Nonlinear => {
            let h = affine(g, x, p[0], p[1])?;
            let h = g.relu(h);
            affine(g, h, p[2], p[3])?
        }
    };
    g.softmax(logits, 1)
}

fn predict(params: &ParamStore<f64>, x: &Samples, classes: usize, kind: ProbeKind) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let xv = g.constant(Tensor::new(&[x.len(), x.dim], x.data.clone())?);
    let probs = forward(&mut g, bound.vars(), xv, kind)?;
    let out = g.value(probs).data().to_vec();
    debug_assert_eq!(out.len(), x.len() * classes);
    Ok(out)
}
