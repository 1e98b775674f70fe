//! Parameters and forward pass of the slot autoencoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ModelConfig;
use crate::autodiff::nn::{self, GruVars};
use crate::autodiff::{BoundParams, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

const LN_EPS: f64 = 1e-5;
const ATTN_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: ParamId,
    b: Option<ParamId>,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    kernel: ParamId,
    bias: ParamId,
    stride: usize,
    transposed: bool,
}

#[derive(Clone, Copy, Debug)]
struct Gru {
    w_input: ParamId,
    w_hidden: ParamId,
    b_input: ParamId,
    b_hidden: ParamId,
}

/// Slot Attention parameters: slot prior, projections, GRU and residual MLP.
#[derive(Clone, Copy, Debug)]
pub struct SlotAttentionParams {
    mu: ParamId,
    log_sigma: ParamId,
    norm_inputs: Norm,
    norm_slots: Norm,
    norm_mlp: Norm,
    key: Dense,
    query: Dense,
    value: Dense,
    gru: Gru,
    mlp_in: Dense,
    mlp_out: Dense,
}

impl SlotAttentionParams {
    pub fn mu(&self) -> ParamId {
        self.mu
    }

    pub fn log_sigma(&self) -> ParamId {
        self.log_sigma
    }
}

#[derive(Clone, Debug)]
struct Layout {
    encoder: Vec<Conv>,
    encoder_pos: Dense,
    encoder_norm: Norm,
    encoder_mlp: [Dense; 2],
    slot_attention: SlotAttentionParams,
    decoder_pos: Dense,
    decoder: Vec<Conv>,
}

/// Result of one forward pass over a batch, as graph variables.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// `[B, h', w', C]` CNN features before position embedding.
    pub feature_map: Var,
    /// `[B, N, D_enc]` position-embedded, normalised features.
    pub features: Var,
    /// `[B, K, D_slots]` final slots.
    pub slots: Var,
    /// `[B, K, N]` attention of every iteration, normalised over slots.
    pub attn: Vec<Var>,
    /// `[B, K, H, W, C]` per-slot decodings.
    pub per_slot: Var,
    /// `[B, K, H, W, 1]` alpha logits before the slot softmax.
    pub alpha_logits: Var,
    /// `[B, K, H, W, 1]` alpha masks, normalised over slots.
    pub alpha: Var,
    /// `[B, H, W, C]` alpha-weighted reconstruction.
    pub combined: Var,
}

/// The slot autoencoder with its parameters.
#[derive(Clone, Debug)]
pub struct SlotModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| lit(rng.random_range(-limit..limit)))
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn dense(&mut self, name: &str, din: usize, dout: usize, bias: bool) -> Dense {
        let w = self.store.add(format!("{name}.w"), glorot(self.rng, &[din, dout], din, dout));
        let b = bias.then(|| self.store.add(format!("{name}.b"), Tensor::zeros(&[dout])));
        Dense { w, b }
    }

    fn norm(&mut self, name: &str, dim: usize) -> Norm {
        Norm {
            gain: self.store.add(format!("{name}.gain"), Tensor::ones(&[dim])),
            bias: self.store.add(format!("{name}.bias"), Tensor::zeros(&[dim])),
        }
    }

    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize, stride: usize, transposed: bool) -> Conv {
        let shape = if transposed { [k, k, cout, cin] } else { [k, k, cin, cout] };
        let kernel = self.store.add(format!("{name}.kernel"), glorot(self.rng, &shape, k * k * cin, k * k * cout));
        let bias = self.store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv { kernel, bias, stride, transposed }
    }
}

/// `[h, w, 4]` grid of distances to the four borders, each in `[0, 1]`.
pub fn position_grid<T: Scalar>(h: usize, w: usize) -> Tensor<T> {
    let frac = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    let mut data = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (frac(y, h), frac(x, w));
            data.extend([fy, fx, 1.0 - fy, 1.0 - fx].map(lit::<T>));
        }
    }
    Tensor::new(&[h, w, 4], data).expect("grid size")
}

/// Standard-normal slot noise `[batch, K, D_slots]` from `seed`.
pub fn slot_noise<T: Scalar>(config: &ModelConfig, batch: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[batch, config.num_slots, config.slot_dim], |_| lit(rng.sample::<f64, _>(StandardNormal)))
}

impl<T: Scalar> SlotModel<T> {
    /// Fresh model with Glorot-initialised weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { store: ParamStore::new(), rng: &mut rng };

        let mut encoder = Vec::new();
        let mut cin = config.input_space.channel_count();
        for (i, l) in config.encoder.iter().enumerate() {
            encoder.push(b.conv(&format!("encoder.conv{i}"), l.kernel, cin, l.channels, l.stride, false));
            cin = l.channels;
        }
        let enc_c = config.encoder_channels();
        let encoder_pos = b.dense("encoder.pos", 4, enc_c, true);
        let encoder_norm = b.norm("encoder.norm", enc_c);
        let encoder_mlp = [
            b.dense("encoder.mlp0", enc_c, config.encoder_dim, true),
            b.dense("encoder.mlp1", config.encoder_dim, config.encoder_dim, true),
        ];

        let (d, denc, hid) = (config.slot_dim, config.encoder_dim, config.mlp_hidden);
        let mu = b.store.add("slots.mu", glorot(b.rng, &[d], 1, d));
        let log_sigma = b.store.add("slots.log_sigma", glorot(b.rng, &[d], 1, d));
        let norm_inputs = b.norm("sa.norm_inputs", denc);
        let norm_slots = b.norm("sa.norm_slots", d);
        let norm_mlp = b.norm("sa.norm_mlp", d);
        let key = b.dense("sa.key", denc, d, false);
        let query = b.dense("sa.query", d, d, false);
        let value = b.dense("sa.value", denc, d, false);
        let gru = Gru {
            w_input: b.store.add("sa.gru.w_input", glorot(b.rng, &[d, 3 * d], d, 3 * d)),
            w_hidden: b.store.add("sa.gru.w_hidden", glorot(b.rng, &[d, 3 * d], d, 3 * d)),
            b_input: b.store.add("sa.gru.b_input", Tensor::zeros(&[3 * d])),
            b_hidden: b.store.add("sa.gru.b_hidden", Tensor::zeros(&[3 * d])),
        };
        let mlp_in = b.dense("sa.mlp0", d, hid, true);
        let mlp_out = b.dense("sa.mlp1", hid, d, true);
        let slot_attention = SlotAttentionParams {
            mu,
            log_sigma,
            norm_inputs,
            norm_slots,
            norm_mlp,
            key,
            query,
            value,
            gru,
            mlp_in,
            mlp_out,
        };

        let decoder_pos = b.dense("decoder.pos", 4, d, true);
        let mut decoder = Vec::new();
        let mut cin = d;
        for (i, l) in config.decoder.iter().enumerate() {
            decoder.push(b.conv(&format!("decoder.conv{i}"), l.kernel, cin, l.channels, l.stride, l.stride > 1));
            cin = l.channels;
        }
        decoder.push(b.conv("decoder.out", config.decoder_out_kernel, cin, config.decoder_output_channels(), 1, false));

        let params = b.store;
        let layout = Layout { encoder, encoder_pos, encoder_norm, encoder_mlp, slot_attention, decoder_pos, decoder };
        Ok(Self { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn slot_attention_params(&self) -> &SlotAttentionParams {
        &self.layout.slot_attention
    }

    /// Same architecture in another precision.
    pub fn cast<U: Scalar>(&self) -> SlotModel<U> {
        SlotModel { config: self.config.clone(), params: self.params.cast(), layout: self.layout.clone() }
    }

    fn dense(&self, g: &mut Graph<T>, p: &BoundParams, d: Dense, x: Var) -> Result<Var> {
        nn::linear(g, x, p.get(d.w), d.b.map(|b| p.get(b)))
    }

    fn norm(&self, g: &mut Graph<T>, p: &BoundParams, n: Norm, x: Var) -> Result<Var> {
        g.layer_norm(x, p.get(n.gain), p.get(n.bias), lit(LN_EPS))
    }

    fn conv(&self, g: &mut Graph<T>, p: &BoundParams, c: Conv, x: Var) -> Result<Var> {
        let y = if c.transposed {
            g.conv_transpose2d(x, p.get(c.kernel), c.stride)?
        } else {
            g.conv2d(x, p.get(c.kernel), c.stride)?
        };
        let cout = *g.shape(y).last().unwrap();
        let bias = g.reshape(p.get(c.bias), &[1, 1, 1, cout])?;
        g.add(y, bias)
    }

    /// CNN features, position embedding, layer norm and MLP.
    ///
    /// `images` is `[B, H, W, C_in]`; returns `(feature_map, features)`.
    pub fn encode(&self, g: &mut Graph<T>, p: &BoundParams, images: Var) -> Result<(Var, Var)> {
        let s = g.shape(images).to_vec();
        let c_in = self.config.input_space.channel_count();
        if s.len() != 4 || s[1] != self.config.image_size || s[2] != self.config.image_size || s[3] != c_in {
            return Err(Error::Shape(format!(
                "encoder expects [B, {n}, {n}, {c_in}] images, got {s:?}",
                n = self.config.image_size
            )));
        }
        let mut x = images;
        for &layer in &self.layout.encoder {
            x = self.conv(g, p, layer, x)?;
            x = g.relu(x);
        }
        let feature_map = x;
        let fs = g.shape(x).to_vec();
        let (batch, n, c) = (fs[0], fs[1] * fs[2], fs[3]);
        let grid = g.constant(position_grid(fs[1], fs[2]));
        let pos = self.dense(g, p, self.layout.encoder_pos, grid)?;
        let pos = g.reshape(pos, &[1, fs[1], fs[2], c])?;
        let x = g.add(x, pos)?;
        let x = g.reshape(x, &[batch, n, c])?;
        let x = self.norm(g, p, self.layout.encoder_norm, x)?;
        let [m0, m1] = self.layout.encoder_mlp;
        let x = self.dense(g, p, m0, x)?;
        let x = g.relu(x);
        let features = self.dense(g, p, m1, x)?;
        Ok((feature_map, features))
    }

    /// `μ + exp(log σ) · noise` with `noise` of shape `[B, K, D_slots]`.
    pub fn init_slots(&self, g: &mut Graph<T>, p: &BoundParams, noise: Var) -> Result<Var> {
        let d = self.config.slot_dim;
        let sa = &self.layout.slot_attention;
        let mu = g.reshape(p.get(sa.mu), &[1, 1, d])?;
        let log_sigma = g.reshape(p.get(sa.log_sigma), &[1, 1, d])?;
        let sigma = g.exp(log_sigma);
        let spread = g.mul(noise, sigma)?;
        g.add(spread, mu)
    }

    /// Iterative competitive attention of `slots` (`[B,K,D]`) over `features`
    /// (`[B,N,D_enc]`). Returns the final slots and the attention of every
    /// iteration.
    pub fn slot_attention(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        features: Var,
        slots: Var,
        iterations: usize,
    ) -> Result<(Var, Vec<Var>)> {
        let sa = &self.layout.slot_attention;
        let (fs, ss) = (g.shape(features).to_vec(), g.shape(slots).to_vec());
        let d = self.config.slot_dim;
        if fs.len() != 3 || ss.len() != 3 || fs[0] != ss[0] || fs[2] != self.config.encoder_dim || ss[2] != d {
            return Err(Error::Shape(format!("slot attention of features {fs:?} and slots {ss:?}")));
        }
        let inputs = self.norm(g, p, sa.norm_inputs, features)?;
        let keys = self.dense(g, p, sa.key, inputs)?;
        let values = self.dense(g, p, sa.value, inputs)?;
        let scale = T::one() / lit::<T>(d as f64).sqrt();

        let mut slots = slots;
        let mut attn_maps = Vec::with_capacity(iterations);
        let gru = GruVars {
            w_input: p.get(sa.gru.w_input),
            w_hidden: p.get(sa.gru.w_hidden),
            b_input: p.get(sa.gru.b_input),
            b_hidden: p.get(sa.gru.b_hidden),
        };
        for _ in 0..iterations {
            let prev = slots;
            let normed = self.norm(g, p, sa.norm_slots, slots)?;
            let q = self.dense(g, p, sa.query, normed)?;
            let logits = g.bmm(q, keys, true)?; // [B, K, N]
            let logits = g.scale(logits, scale);
            let attn = g.softmax(logits, 1)?;
            attn_maps.push(attn);
            let weights = g.add_scalar(attn, lit(ATTN_EPS));
            let mass = g.sum_axis(weights, 2)?;
            let weights = g.div(weights, mass)?;
            let updates = g.bmm(weights, values, false)?; // [B, K, D]
            slots = nn::gru_cell(g, prev, updates, &gru)?;
            let normed = self.norm(g, p, sa.norm_mlp, slots)?;
            let hidden = self.dense(g, p, sa.mlp_in, normed)?;
            let hidden = g.relu(hidden);
            let residual = self.dense(g, p, sa.mlp_out, hidden)?;
            slots = g.add(slots, residual)?;
        }
        Ok((slots, attn_maps))
    }

    /// Spatial broadcast decoding of `[B, K, D]` slots into
    /// `(per_slot [B,K,H,W,C], alpha_logits [B,K,H,W,1])`.
    pub fn decode(&self, g: &mut Graph<T>, p: &BoundParams, slots: Var) -> Result<(Var, Var)> {
        let s = g.shape(slots).to_vec();
        let d = self.config.slot_dim;
        if s.len() != 3 || s[2] != d {
            return Err(Error::Shape(format!("decoder expects [B, K, {d}] slots, got {s:?}")));
        }
        let (batch, k) = (s[0], s[1]);
        let [gh, gw] = self.config.broadcast_grid;
        let tiled = g.reshape(slots, &[batch * k, 1, 1, d])?;
        let grid = g.constant(position_grid(gh, gw));
        let pos = self.dense(g, p, self.layout.decoder_pos, grid)?;
        let pos = g.reshape(pos, &[1, gh, gw, d])?;
        let mut x = g.add(tiled, pos)?;
        let last = self.layout.decoder.len() - 1;
        for (i, &layer) in self.layout.decoder.iter().enumerate() {
            x = self.conv(g, p, layer, x)?;
            if i < last {
                x = g.relu(x);
            }
        }
        let (h, w, c) = (self.config.image_size, self.config.image_size, self.config.color_channels());
        let x = g.reshape(x, &[batch, k, h, w, c + 1])?;
        let per_slot = g.slice(x, 4, 0, c)?;
        let alpha_logits = g.slice(x, 4, c, 1)?;
        Ok((per_slot, alpha_logits))
    }

    /// Softmax over slots of the alpha logits and the alpha-weighted sum of
    /// the per-slot decodings. Returns `(combined [B,H,W,C], alpha)`.
    pub fn reconstruct(&self, g: &mut Graph<T>, per_slot: Var, alpha_logits: Var) -> Result<(Var, Var)> {
        let ps = g.shape(per_slot).to_vec();
        let al = g.shape(alpha_logits).to_vec();
        if ps.len() != 5 || al.len() != 5 || ps[..4] != al[..4] || al[4] != 1 {
            return Err(Error::Shape(format!("reconstruct of {ps:?} with alpha {al:?}")));
        }
        let alpha = g.softmax(alpha_logits, 1)?;
        let weighted = g.mul(per_slot, alpha)?;
        let combined = g.sum_axis(weighted, 1)?;
        let combined = g.reshape(combined, &[ps[0], ps[2], ps[3], ps[4]])?;
        Ok((combined, alpha))
    }

    /// Full forward pass. `images` is `[B,H,W,C_in]`, `noise` is `[B,K,D]`.
    pub fn forward(&self, g: &mut Graph<T>, p: &BoundParams, images: Var, noise: Var) -> Result<ForwardPass> {
        let (feature_map, features) = self.encode(g, p, images)?;
        let init = self.init_slots(g, p, noise)?;
        let (slots, attn) = self.slot_attention(g, p, features, init, self.config.sa_iterations)?;
        let (per_slot, alpha_logits) = self.decode(g, p, slots)?;
        let (combined, alpha) = self.reconstruct(g, per_slot, alpha_logits)?;
        Ok(ForwardPass { feature_map, features, slots, attn, per_slot, alpha_logits, alpha, combined })
    }

    /// Mean squared reconstruction error against `target` (`[B,H,W,C]`).
    pub fn loss(&self, g: &mut Graph<T>, combined: Var, target: Var) -> Result<Var> {
        nn::mse(g, combined, target)
    }
}
