//! Acceptance checks for the whole pipeline, one pass/fail line each.
//!
//! Runs as a plain binary (`harness = false`) so the summary is printed even
//! when everything passes. `ACCEPTANCE_ONLY=3,9` restricts the run to the
//! listed criteria; criterion 10 trains its own model when 9 is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use ocrl_cli::Cli;
use ocrl_core::autodiff::nn::{self, GruVars};
use ocrl_core::autodiff::{grad_check, BoundParams, Graph, Tensor, Var};
use ocrl_core::color::{
    channel_correlation, compose_target, hsv_to_rgb, lab_to_rgb, rgb_to_hsv, rgb_to_hsv_pixel, rgb_to_lab, Channel,
    ColorSpace, Image,
};
use ocrl_core::metrics::{
    adjusted_rand_index, dci, fg_ari, lighting_robustness, miou_from_iou, mse_rgb, split_indices, EvalOptions, Samples,
    MSE_SCALE_255,
};
use ocrl_core::model::{slot_noise, ConvSpec, ModelConfig, SlotModel};
use ocrl_core::scene::{apply_lighting, derive_seed, generate_dataset, generate_scene, Dataset, DatasetConfig, Scene};
use ocrl_core::train::{multi_seed, SeedReport, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// 1 -------------------------------------------------------------------------

fn color_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = (0..300_000).map(|_| rng.random_range(0.0..=1.0)).collect();
    let img = Image::new(1, 100_000, ColorSpace::Rgb, data).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let hsv = hsv_to_rgb(&rgb_to_hsv(&img).unwrap()).unwrap();
    let lab = lab_to_rgb(&rgb_to_lab(&img).unwrap()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (eh, el) = (max_abs(img.data(), hsv.data()), max_abs(img.data(), lab.data()));
    check(eh <= 1e-6 && el <= 1e-3 && secs < 5.0, format!("HSV max error {eh:.1e}, LAB {el:.1e}, {secs:.2}s"))
}

// 2 -------------------------------------------------------------------------

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn pearson_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for corpus in 0..100u64 {
        let images: Vec<Image<f64>> = (0..rng.random_range(1..=4))
            .map(|_| {
                let (h, w) = (rng.random_range(2..=50), rng.random_range(2..=50));
                let tint: f64 = rng.random_range(0.0..1.0);
                let data = (0..h * w * 3).map(|_| 0.4 * tint + 0.6 * rng.random_range(0.0..1.0f64)).collect();
                Image::new(h, w, ColorSpace::Rgb, data).unwrap()
            })
            .collect();
        let m = channel_correlation(&images, &Channel::ALL, usize::MAX, corpus).map_err(|e| e.to_string())?;
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 6];
        for img in &images {
            for p in img.pixels() {
                let hsv = rgb_to_hsv_pixel([p[0], p[1], p[2]]);
                for (c, v) in [p[0], p[1], p[2], hsv[0], hsv[1], hsv[2]].into_iter().enumerate() {
                    cols[c].push(v);
                }
            }
        }
        if cols[0].len() > 10_000 || m.sample_count != cols[0].len() {
            return Err(format!("corpus {corpus}: {} pixels, {} sampled", cols[0].len(), m.sample_count));
        }
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { pearson(&cols[i], &cols[j]) };
                worst = worst.max((m.values[i * 6 + j] - want).abs());
            }
        }
    }
    check(worst <= 1e-10, format!("100 corpora, max deviation {worst:.1e}"))
}

// 3 -------------------------------------------------------------------------

fn correlation_signs() -> Outcome {
    let start = Instant::now();
    let cfg = DatasetConfig { light_distances: vec![0.0, 5.0, 10.0, 20.0], ..DatasetConfig::new(500, 32, [1, 3]) };
    let mut corpus = Vec::with_capacity(2000);
    let mut index = 0u64;
    while corpus.len() < 2000 {
        // Placement failures are skipped, as in dataset generation.
        let seed = derive_seed(cfg.master_seed, index);
        index += 1;
        if let Ok(scene) = generate_scene(&cfg, seed) {
            for &l in &cfg.light_distances {
                corpus.push(apply_lighting(&scene, l).map_err(|e| e.to_string())?.image);
            }
        }
    }
    let m = channel_correlation(&corpus, &Channel::ALL, usize::MAX, 0).map_err(|e| e.to_string())?;
    let r = |a, b| m.get(a, b).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let v = [r(Channel::V, Channel::R), r(Channel::V, Channel::G), r(Channel::V, Channel::B)];
    let (h, s) = (r(Channel::H, Channel::R), r(Channel::S, Channel::R));
    check(
        v.iter().all(|&c| c >= 0.8) && h.abs() <= 0.5 && s.abs() <= 0.5 && secs < 120.0,
        format!(
            "corr(V,R/G/B) = {:.3}/{:.3}/{:.3}, corr(H,R) = {h:.3}, corr(S,R) = {s:.3}, {} pixels, {secs:.1}s",
            v[0], v[1], v[2], m.sample_count
        ),
    )
}

// 4 -------------------------------------------------------------------------

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

type OpFn = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> ocrl_core::Result<Var>>;

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let a = random(&[3, 4], 1);
    let pos = random(&[3, 4], 2).map(|v| v + 2.0);
    let t3 = random(&[2, 3, 4], 3);
    let d = 4;
    let gru = vec![random(&[3, d], 4), random(&[3, d], 5), random(&[d, 3 * d], 6), random(&[d, 3 * d], 7), random(&[3 * d], 8), random(&[3 * d], 9)];
    let mut cases: Vec<(&str, Vec<Tensor<f64>>, OpFn)> = vec![
        ("add", vec![t3.clone(), random(&[1, 1, 4], 10)], Box::new(|g, v| g.add(v[0], v[1]))),
        ("sub", vec![a.clone(), pos.clone()], Box::new(|g, v| g.sub(v[0], v[1]))),
        ("mul", vec![t3.clone(), random(&[2, 3, 1], 11)], Box::new(|g, v| g.mul(v[0], v[1]))),
        ("div", vec![a.clone(), pos.clone()], Box::new(|g, v| g.div(v[0], v[1]))),
        ("scale", vec![a.clone()], Box::new(|g, v| Ok(g.scale(v[0], 1.7)))),
        ("add_scalar", vec![a.clone()], Box::new(|g, v| Ok(g.add_scalar(v[0], -0.3)))),
        ("relu", vec![a.clone()], Box::new(|g, v| Ok(g.relu(v[0])))),
        ("sigmoid", vec![a.clone()], Box::new(|g, v| Ok(g.sigmoid(v[0])))),
        ("tanh", vec![a.clone()], Box::new(|g, v| Ok(g.tanh(v[0])))),
        ("exp", vec![a.clone()], Box::new(|g, v| Ok(g.exp(v[0])))),
        ("ln", vec![pos.clone()], Box::new(|g, v| Ok(g.ln(v[0])))),
        ("matmul", vec![random(&[3, 5], 12), random(&[5, 2], 13)], Box::new(|g, v| g.matmul(v[0], v[1]))),
        ("bmm", vec![random(&[2, 3, 5], 14), random(&[2, 5, 4], 15)], Box::new(|g, v| g.bmm(v[0], v[1], false))),
        ("bmm_t", vec![random(&[2, 3, 5], 16), random(&[2, 4, 5], 17)], Box::new(|g, v| g.bmm(v[0], v[1], true))),
        ("reshape", vec![t3.clone()], Box::new(|g, v| g.reshape(v[0], &[6, 4]))),
        ("slice", vec![t3.clone()], Box::new(|g, v| g.slice(v[0], 2, 1, 2))),
        ("sum", vec![t3.clone()], Box::new(|g, v| Ok(g.sum(v[0])))),
        ("mean", vec![t3.clone()], Box::new(|g, v| Ok(g.mean(v[0])))),
        ("sum_axis", vec![t3.clone()], Box::new(|g, v| g.sum_axis(v[0], 1))),
        ("softmax", vec![t3.clone()], Box::new(|g, v| g.softmax(v[0], 1))),
        (
            "layer_norm",
            vec![random(&[3, 2, 6], 18), random(&[6], 19).map(|v| v + 1.0), random(&[6], 20)],
            Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5)),
        ),
        ("conv2d", vec![random(&[2, 6, 6, 2], 21), random(&[3, 3, 2, 3], 22)], Box::new(|g, v| g.conv2d(v[0], v[1], 2))),
        (
            "conv_transpose2d",
            vec![random(&[2, 3, 3, 3], 23), random(&[5, 5, 2, 3], 24)],
            Box::new(|g, v| g.conv_transpose2d(v[0], v[1], 2)),
        ),
        (
            "linear",
            vec![random(&[2, 3, 5], 25), random(&[5, 4], 26), random(&[4], 27)],
            Box::new(|g, v| nn::linear(g, v[0], v[1], Some(v[2]))),
        ),
        (
            "gru_cell",
            gru,
            Box::new(|g, v| {
                let p = GruVars { w_input: v[2], w_hidden: v[3], b_input: v[4], b_hidden: v[5] };
                nn::gru_cell(g, v[0], v[1], &p)
            }),
        ),
        ("mse", vec![t3.clone(), random(&[2, 3, 4], 28)], Box::new(|g, v| nn::mse(g, v[0], v[1]))),
    ];
    let mut worst = (0.0f64, "");
    for (name, point, f) in cases.drain(..) {
        // A fixed random weighting makes every output entry matter.
        let report = grad_check(
            |g, v| {
                let y = f(g, v)?;
                let w = g.constant(random(g.shape(y), 991));
                let p = g.mul(y, w)?;
                Ok(g.sum(p))
            },
            &point,
            64,
            1e-4,
            17,
        )
        .map_err(|e| format!("{name}: {e}"))?;
        if !report.passed(1e-4) || report.max_rel_error() > worst.0 {
            worst = (report.max_rel_error(), name);
        }
        if !report.passed(1e-4) {
            return Err(format!("{name}: relative error {:.2e}", report.max_rel_error()));
        }
    }

    let cfg = ModelConfig {
        image_size: 16,
        input_space: ColorSpace::Rgb,
        encoder: vec![ConvSpec::new(8, 3, 1), ConvSpec::new(8, 3, 2)],
        encoder_dim: 16,
        num_slots: 3,
        slot_dim: 16,
        mlp_hidden: 16,
        sa_iterations: 3,
        decoder: vec![ConvSpec::new(8, 3, 2)],
        decoder_out_kernel: 3,
        broadcast_grid: [8, 8],
        target_space: ColorSpace::RgbS,
    };
    let model = SlotModel::<f64>::new(cfg.clone(), 3).map_err(|e| e.to_string())?;
    let images = Tensor::<f64>::from_fn(&[2, 16, 16, 3], |i| ((i * 37) % 101) as f64 / 100.0);
    let target = Tensor::<f64>::from_fn(&[2, 16, 16, 4], |i| ((i * 13) % 89) as f64 / 88.0);
    let noise = slot_noise::<f64>(&cfg, 2, 11);
    let report = grad_check(
        |g, vars| {
            let bound = BoundParams::from_vars(vars.to_vec());
            let (x, n, y) = (g.constant(images.clone()), g.constant(noise.clone()), g.constant(target.clone()));
            let pass = model.forward(g, &bound, x, n)?;
            model.loss(g, pass.combined, y)
        },
        model.params().tensors(),
        64,
        1e-4,
        5,
    )
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        report.passed(1e-4) && secs < 300.0,
        format!(
            "26 ops (worst {} at {:.1e}); full model {:.1e} over {} coordinates ({} at kinks); {secs:.1}s",
            worst.1,
            worst.0,
            report.max_rel_error(),
            report.probes.len(),
            report.non_differentiable()
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn slot_invariants() -> Outcome {
    let cfg = ModelConfig {
        image_size: 16,
        input_space: ColorSpace::Rgb,
        encoder: vec![ConvSpec::new(8, 3, 1), ConvSpec::new(8, 3, 2)],
        encoder_dim: 12,
        num_slots: 4,
        slot_dim: 10,
        mlp_hidden: 12,
        sa_iterations: 3,
        decoder: vec![ConvSpec::new(8, 3, 2)],
        decoder_out_kernel: 3,
        broadcast_grid: [8, 8],
        target_space: ColorSpace::RgbS,
    };
    let model = SlotModel::<f32>::new(cfg.clone(), 1).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Tensor::from_fn(&[2, 16, 16, 3], |_| rng.random_range(0.0..1.0f32));
    let run = |noise: &Tensor<f32>| {
        let mut g = Graph::new();
        let p = model.params().bind(&mut g);
        let (xv, nv) = (g.constant(x.clone()), g.constant(noise.clone()));
        let f = model.forward(&mut g, &p, xv, nv).unwrap();
        let attn: Vec<Tensor<f32>> = f.attn.iter().map(|&a| g.value(a).clone()).collect();
        (g.value(f.slots).clone(), attn, g.value(f.alpha).clone(), g.value(f.combined).clone())
    };
    // Worst deviation from 1 of the sum over axis 1 of a `[B, K, ...]` tensor.
    let norm_error = |t: &Tensor<f32>| {
        let (b, k) = (t.shape()[0], t.shape()[1]);
        let inner = t.len() / (b * k);
        let mut worst = 0.0f64;
        for bi in 0..b {
            for i in 0..inner {
                let s: f64 = (0..k).map(|kk| t.data()[(bi * k + kk) * inner + i] as f64).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    };
    let permute = |t: &Tensor<f32>, perm: &[usize]| {
        let (b, k) = (t.shape()[0], t.shape()[1]);
        let inner = t.len() / (b * k);
        let mut out = Vec::with_capacity(t.len());
        for bi in 0..b {
            for &p in perm {
                out.extend_from_slice(&t.data()[(bi * k + p) * inner..][..inner]);
            }
        }
        Tensor::new(t.shape(), out).unwrap()
    };

    let noise = slot_noise::<f32>(&cfg, 2, 3);
    let (slots, attn, alpha, combined) = run(&noise);
    let attn_err = attn.iter().map(&norm_error).fold(0.0, f64::max);
    let alpha_err = norm_error(&alpha);

    let perm = [2, 0, 3, 1];
    let (slots_p, attn_p, alpha_p, combined_p) = run(&permute(&noise, &perm));
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let equivariant = slots_p == permute(&slots, &perm)
        && attn.iter().zip(&attn_p).all(|(a, b)| *b == permute(a, &perm))
        && alpha_p == permute(&alpha, &perm)
        && bits(&combined) == bits(&combined_p);

    let d = cfg.slot_dim;
    let one = slot_noise::<f32>(&cfg, 2, 5);
    let same = Tensor::from_fn(&[2, 4, d], |i| one.data()[(i / (4 * d)) * 4 * d + i % d]);
    let (slots_s, attn_s, _, _) = run(&same);
    let identical = |t: &Tensor<f32>| {
        let (b, k) = (t.shape()[0], t.shape()[1]);
        let inner = t.len() / (b * k);
        (0..b).all(|bi| (1..k).all(|kk| t.data()[(bi * k + kk) * inner..][..inner] == t.data()[bi * k * inner..][..inner]))
    };
    let symmetric = identical(&slots_s) && attn_s.iter().all(identical);

    check(
        attn_err <= 1e-6 && alpha_err <= 1e-6 && equivariant && symmetric,
        format!(
            "attn sums off by {attn_err:.1e} over {} iterations, alpha by {alpha_err:.1e}; permutation equivariance {}; identical slots stay identical {}",
            attn.len(),
            if equivariant { "exact" } else { "BROKEN" },
            if symmetric { "yes" } else { "NO" }
        ),
    )
}

// 6 -------------------------------------------------------------------------

/// Pair-counting ARI over all unordered pairs.
fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    if only_a == 0.0 && only_b == 0.0 {
        return 1.0;
    }
    2.0 * (both * neither - only_a * only_b) / ((both + only_b) * (only_b + neither) + (both + only_a) * (only_a + neither))
}

fn partitions(n: usize, blocks: usize) -> Vec<Vec<usize>> {
    fn grow(cur: &mut Vec<usize>, n: usize, blocks: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let next = cur.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next.min(blocks - 1) {
            cur.push(l);
            grow(cur, n, blocks, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, blocks, &mut out);
    out
}

fn best_permutation(iou: &[f64], segments: usize, slots: usize) -> f64 {
    fn go(g: usize, used: &mut [bool], iou: &[f64], segments: usize, slots: usize) -> f64 {
        if g == segments {
            return 0.0;
        }
        // Leaving a segment unmatched is allowed when slots run out.
        let mut best = if segments - g > slots - used.iter().filter(|&&u| u).count() {
            go(g + 1, used, iou, segments, slots)
        } else {
            f64::NEG_INFINITY
        };
        for s in 0..slots {
            if !used[s] {
                used[s] = true;
                best = best.max(iou[g * slots + s] + go(g + 1, used, iou, segments, slots));
                used[s] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; slots], iou, segments, slots) / segments as f64
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    // FG-ARI: every partition of up to 10 pixels into up to 3 blocks as the
    // ground truth (block 0 is background), against every partition as the
    // prediction.
    let mut pairs = 0usize;
    let mut ari_err = 0.0f64;
    for n in 1..=10 {
        let all = partitions(n, 3);
        for gt in &all {
            let fg: Vec<usize> = (0..n).filter(|&i| gt[i] != 0).collect();
            let gt_fg: Vec<usize> = fg.iter().map(|&i| gt[i]).collect();
            for pred in &all {
                let got = fg_ari(pred, gt).map_err(|e| e.to_string())?;
                let want = if fg.is_empty() {
                    None
                } else {
                    let pred_fg: Vec<usize> = fg.iter().map(|&i| pred[i]).collect();
                    Some(ari_oracle(&pred_fg, &gt_fg))
                };
                match (got, want) {
                    (None, None) => {}
                    (Some(a), Some(b)) => ari_err = ari_err.max((a - b).abs()),
                    _ => return Err(format!("fg_ari({pred:?}, {gt:?}) = {got:?}, oracle {want:?}")),
                }
                pairs += 1;
            }
        }
        // All-foreground labelings exercise plain ARI on the full partition.
        if n <= 8 {
            for a in &all {
                for b in &all {
                    let got = adjusted_rand_index(a, b).map_err(|e| e.to_string())?;
                    ari_err = ari_err.max((got - ari_oracle(a, b)).abs());
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut miou_err = 0.0f64;
    for _ in 0..1000 {
        let slots = rng.random_range(1..=6);
        let segments = rng.random_range(1..=6);
        let iou: Vec<f64> = (0..segments * slots).map(|_| rng.random_range(0.0..1.0)).collect();
        miou_err = miou_err.max((miou_from_iou(&iou, segments, slots) - best_permutation(&iou, segments, slots)).abs());
    }

    let n = 270;
    let factors: Vec<Vec<usize>> = vec![(0..n).map(|i| i % 3).collect(), (0..n).map(|i| (i / 3) % 3).collect()];
    let codes = Samples::new(2, (0..n).flat_map(|i| [factors[0][i] as f64, factors[1][i] as f64]).collect())
        .map_err(|e| e.to_string())?;
    let (train, test) = split_indices(n, 0.25, 0);
    let r = dci(&codes, &factors, &[3, 3], &train, &test, 0).map_err(|e| e.to_string())?;
    let (dd, cc) = (r.disentanglement.unwrap_or(f64::NAN), r.completeness.unwrap_or(f64::NAN));
    let secs = start.elapsed().as_secs_f64();
    check(
        ari_err <= 1e-10 && miou_err <= 1e-10 && (dd - 1.0).abs() <= 1e-6 && (cc - 1.0).abs() <= 1e-6,
        format!(
            "FG-ARI on {pairs} partition pairs (max error {ari_err:.1e}); mIoU vs permutation search on 1000 matrices ({miou_err:.1e}); DCI identity D = {dd:.6}, C = {cc:.6}; {secs:.1}s"
        ),
    )
}

// 7 -------------------------------------------------------------------------

fn mse_exclusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gt = Image::new(8, 8, ColorSpace::Rgb, (0..192).map(|_| rng.random_range(0.0..=1.0)).collect::<Vec<f64>>())
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for space in [ColorSpace::RgbS, ColorSpace::RgbSv, ColorSpace::RgbHsv] {
        let target = compose_target(&gt, space).map_err(|e| e.to_string())?;
        let c = target.channels();
        let data = target.data().iter().enumerate().map(|(i, &v)| if i % c >= 3 { 1.0 - v + 0.37 } else { v }).collect();
        let pred = Image::new(8, 8, space, data).map_err(|e| e.to_string())?;
        worst = worst.max(mse_rgb(&pred, &gt, MSE_SCALE_255).map_err(|e| e.to_string())?);
    }
    check(worst == 0.0, format!("RGB-S, RGB-SV, RGB-HSV with corrupted extra channels: mse_rgb {worst}"))
}

// 8 -------------------------------------------------------------------------

fn mean_v(scene: &Scene) -> f64 {
    let n = scene.image.pixel_count() as f64;
    scene.image.pixels().map(|p| rgb_to_hsv_pixel([p[0] as f64, p[1] as f64, p[2] as f64])[2]).sum::<f64>() / n
}

fn lighting_channels() -> Outcome {
    let cfg = DatasetConfig::new(100, 32, [1, 3]);
    let (mut scenes, mut checked, mut worst_h) = (0, 0usize, 0.0f64);
    let mut index = 0u64;
    while scenes < 100 {
        let Ok(scene) = generate_scene(&cfg, derive_seed(8, index)) else {
            index += 1;
            continue;
        };
        index += 1;
        scenes += 1;
        let mut last = mean_v(&scene);
        for l in [5.0, 10.0, 20.0] {
            let lit = apply_lighting(&scene, l).map_err(|e| e.to_string())?;
            let v = mean_v(&lit);
            if v >= last {
                return Err(format!("scene {index}: mean V {v} at L = {l} not below {last}"));
            }
            last = v;
            for (p0, p1) in scene.image.pixels().zip(lit.image.pixels()) {
                let h0 = rgb_to_hsv_pixel([p0[0] as f64, p0[1] as f64, p0[2] as f64]);
                let h1 = rgb_to_hsv_pixel([p1[0] as f64, p1[1] as f64, p1[2] as f64]);
                if h0[1] >= 0.1 && h1[2] >= 0.05 {
                    let dh = (h0[0] - h1[0]).abs();
                    worst_h = worst_h.max(dh.min(1.0 - dh));
                    checked += 1;
                }
            }
        }
    }
    check(
        worst_h <= 1e-6,
        format!("100 scenes: mean V strictly decreasing over L = 0/5/10/20; max hue shift {worst_h:.1e} over {checked} chromatic pixels"),
    )
}

// 9 -------------------------------------------------------------------------

/// The smoke-training recipe. Batch 4 is what fits 30k steps in the hour on
/// a single core.
const SMOKE_STEPS: usize = 5000;
const SMOKE_BATCH: usize = 4;
const SMOKE_SEEDS: [u64; 3] = [0, 1, 2];

fn threads() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("OCRL_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n: &usize| n > 0).map_or(available, |n| n.min(available))
}

struct Smoke {
    runs: Vec<(ColorSpace, SeedReport)>,
    root: PathBuf,
}

impl Smoke {
    /// Final checkpoint of the best seed by FG-ARI.
    fn best_checkpoint(&self, target: ColorSpace) -> Option<PathBuf> {
        let best = self.runs.iter().find(|(t, _)| *t == target)?.1.best_by("fg_ari")?;
        let dir = self.root.join(target.id()).join(format!("seed_{}", best.seed));
        Some(dir.join(format!("checkpoints/step_{SMOKE_STEPS:06}")))
    }
}

fn smoke_training(work: &Path, steps: usize, seeds: &[u64]) -> Result<Smoke, String> {
    let cfg = DatasetConfig::high_contrast(64, 32, 3);
    let data_dir = work.join("smoke_data");
    generate_dataset(&cfg, &data_dir, threads()).map_err(|e| e.to_string())?;
    let data = Dataset::open(&data_dir).map_err(|e| e.to_string())?;
    let root = work.join("smoke_runs");
    let mut runs = Vec::new();
    for target in [ColorSpace::Rgb, ColorSpace::RgbS] {
        let model = ModelConfig::desk(target, 3);
        let mut train = TrainConfig::desk(&data_dir, target, steps, 0);
        train.batch_size = SMOKE_BATCH;
        let report = multi_seed(&train, &model, &data, seeds, &EvalOptions::default(), Some(&root.join(target.id())), threads())
            .map_err(|e| e.to_string())?;
        runs.push((target, report));
    }
    Ok(Smoke { runs, root })
}

fn smoke_criterion(smoke: &Result<Smoke, String>) -> Outcome {
    let smoke = smoke.as_ref().map_err(|e| e.clone())?;
    let mut ok = true;
    let mut lines = Vec::new();
    let mut cpu = 0.0;
    let mut best = Vec::new();
    for (target, report) in &smoke.runs {
        for o in &report.outcomes {
            cpu += o.wall_clock_seconds;
            let ratio = o.final_loss.zip(o.initial_loss).map(|(f, i)| f / i);
            let ari = o.report.as_ref().and_then(|r| r.fg_ari);
            ok &= o.error.is_none() && ratio.is_some_and(|r| r < 0.25);
            lines.push(format!(
                "      {target} seed {}: loss {:.4} -> {:.4} (x{:.3}), FG-ARI {}, mIoU {}{}",
                o.seed,
                o.initial_loss.unwrap_or(f64::NAN),
                o.final_loss.unwrap_or(f64::NAN),
                ratio.unwrap_or(f64::NAN),
                ari.map_or("n/a".into(), |v| format!("{v:.3}")),
                o.report.as_ref().and_then(|r| r.miou).map_or("n/a".into(), |v| format!("{v:.3}")),
                o.error.as_ref().map_or(String::new(), |e| format!(" error: {e}")),
            ));
        }
        let top = report.best_by("fg_ari").and_then(|o| o.report.as_ref()).and_then(|r| r.fg_ari);
        ok &= top.is_some_and(|v| v > 0.5);
        best.push(top);
    }
    ok &= cpu < 3600.0;
    let (rgb, rgbs) = (best[0], best[1]);
    let direction = match (rgb, rgbs) {
        (Some(a), Some(b)) if b > a => format!("RGB-S ahead by {:.3}", b - a),
        (Some(a), Some(b)) => format!("RGB-S not ahead ({:.3})", b - a),
        _ => "no comparison".into(),
    };
    let fmt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}"));
    let summary = format!(
        "best FG-ARI RGB {} / RGB-S {} ({direction}); training {:.0}s of 3600s\n{}",
        fmt(rgb),
        fmt(rgbs),
        cpu,
        lines.join("\n")
    );
    check(ok, summary)
}

// 10 ------------------------------------------------------------------------

fn robustness_criterion(work: &Path, checkpoint: Option<PathBuf>) -> Outcome {
    let ckpt = checkpoint.ok_or("no trained checkpoint")?;
    let model = SlotModel::<f32>::load(&ckpt).map_err(|e| e.to_string())?;
    let cfg = DatasetConfig {
        light_distances: vec![0.0, 5.0, 10.0, 20.0],
        master_seed: 10,
        ..DatasetConfig::high_contrast(100, 32, 3)
    };
    let dir = work.join("lit_data");
    generate_dataset(&cfg, &dir, threads()).map_err(|e| e.to_string())?;
    let data = Dataset::open(&dir).map_err(|e| e.to_string())?;
    let r = lighting_robustness(&model, &data, &EvalOptions::default()).map_err(|e| e.to_string())?;
    let at = |l: f64| r.conditions.iter().find(|c| c.light_distance == l);
    let (c0, c5, c20) = (at(0.0).ok_or("no L = 0")?, at(5.0).ok_or("no L = 5")?, at(20.0).ok_or("no L = 20")?);
    let mean = |s: Option<ocrl_core::metrics::Stat>| s.map_or(f64::NAN, |s| s.mean);
    let (cos5, cos20) = (mean(c5.cosine), mean(c20.cosine));
    let (euc5, euc20) = (mean(c5.euclidean), mean(c20.euclidean));
    let (a0, a20) = (c0.fg_ari.unwrap_or(f64::NAN), c20.fg_ari.unwrap_or(f64::NAN));
    check(
        data.len() >= 100 && cos20 >= cos5 && euc20 >= euc5 && (a0 - a20).abs() <= 0.25,
        format!(
            "{} scenes: cosine {cos5:.3} -> {cos20:.3}, euclidean {euc5:.3} -> {euc20:.3} (L = 5 -> 20); FG-ARI {a0:.3} at L = 0, {a20:.3} at L = 20",
            data.len()
        ),
    )
}

// 11 ------------------------------------------------------------------------

fn ocrl(args: &[&str]) -> Result<(), String> {
    let cli = Cli::try_parse_from(std::iter::once("ocrl").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    ocrl_cli::run(cli).map_err(|e| format!("ocrl {}: {e}", args.join(" ")))
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn reproducibility(work: &Path) -> Outcome {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let gen_cfg = work.join("repro_gen.json");
    std::fs::write(&gen_cfg, r#"{"scene_count": 6, "image_size": 16, "light_distances": [0.0, 10.0]}"#).unwrap();
    let model_cfg = work.join("repro_model.json");
    std::fs::write(
        &model_cfg,
        r#"{"batch_size": 2, "model": {"image_size": 16, "encoder": [{"channels": 8, "kernel": 3, "stride": 2}],
            "encoder_dim": 8, "num_slots": 3, "slot_dim": 8, "mlp_hidden": 16, "sa_iterations": 3,
            "decoder": [{"channels": 8, "kernel": 3, "stride": 2}], "decoder_out_kernel": 3,
            "broadcast_grid": [8, 8], "target_space": "RGB"}}"#,
    )
    .unwrap();
    let mut results = Vec::new();
    for run in ["a", "b"] {
        let (data, train, report) = (work.join(format!("repro_{run}_data")), work.join(format!("repro_{run}_run")), work.join(format!("repro_{run}.json")));
        ocrl(&["gen", "--config", &s(&gen_cfg), "--out", &s(&data), "--seed", "11"])?;
        ocrl(&["train", "--data", &s(&data), "--target", "rgb-s", "--steps", "20", "--seed", "4", "--out", &s(&train), "--config", &s(&model_cfg)])?;
        let ckpt = train.join("checkpoints/step_000020");
        ocrl(&["eval", "--ckpt", &s(&ckpt), "--data", &s(&data), "--report", &s(&report), "--robustness", "--dci"])?;
        let loss = std::fs::read(train.join("loss.oct")).map_err(|e| e.to_string())?;
        results.push((tree(&data), loss, tree(&train.join("checkpoints")), std::fs::read(&report).unwrap()));
    }
    let (a, b) = (&results[0], &results[1]);
    let files = a.0.len();
    check(
        a.0 == b.0 && a.1 == b.1 && a.2 == b.2 && a.3 == b.3,
        format!(
            "dataset ({files} files) {}, loss series {}, checkpoints {}, report {}",
            if a.0 == b.0 { "identical" } else { "DIFFERS" },
            if a.1 == b.1 { "identical" } else { "DIFFERS" },
            if a.2 == b.2 { "identical" } else { "DIFFERS" },
            if a.3 == b.3 { "identical" } else { "DIFFERS" },
        ),
    )
}

fn main() {
    // libtest flags such as `--nocapture` or a name filter are accepted and ignored.
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let work = tempfile::tempdir().expect("temporary directory");
    let mut failed = Vec::new();
    let mut report = |n: u32, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n:>2} {tag} {name} [{secs:.1}s]: {detail}");
        if outcome.is_err() {
            failed.push(n);
        }
    };

    type Criterion = (u32, &'static str, fn() -> Outcome);
    let simple: [Criterion; 8] = [
        (1, "color round trip", color_round_trip),
        (2, "Pearson oracle", pearson_oracle),
        (3, "correlation sign structure", correlation_signs),
        (4, "gradient checks", gradient_checks),
        (5, "Slot Attention invariants", slot_invariants),
        (6, "metric oracles", metric_oracles),
        (7, "mse_rgb ignores extra channels", mse_exclusion),
        (8, "lighting keeps hue, lowers value", lighting_channels),
    ];
    for (n, name, f) in simple {
        if wanted(n) {
            let start = Instant::now();
            report(n, name, start, f());
        }
    }

    let mut checkpoint = None;
    if wanted(9) {
        let start = Instant::now();
        let smoke = smoke_training(work.path(), SMOKE_STEPS, &SMOKE_SEEDS);
        checkpoint = smoke.as_ref().ok().and_then(|s| s.best_checkpoint(ColorSpace::RgbS));
        report(9, "desk-scale smoke training", start, smoke_criterion(&smoke));
    }
    if wanted(10) {
        let start = Instant::now();
        if checkpoint.is_none() {
            checkpoint = smoke_training(work.path(), SMOKE_STEPS, &[0]).ok().and_then(|s| s.best_checkpoint(ColorSpace::RgbS));
        }
        report(10, "lighting robustness", start, robustness_criterion(work.path(), checkpoint));
    }
    if wanted(11) {
        let start = Instant::now();
        report(11, "reproducibility", start, reproducibility(work.path()));
    }

    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
