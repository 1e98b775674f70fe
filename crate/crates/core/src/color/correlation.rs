use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::convert::rgb_to_hsv_pixel;
use super::image::Image;
use super::space::ColorSpace;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channels available to the correlation analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
    H,
    S,
    V,
}

impl Channel {
    pub const ALL: [Channel; 6] = [Channel::R, Channel::G, Channel::B, Channel::H, Channel::S, Channel::V];

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
            Channel::H => "H",
            Channel::S => "S",
            Channel::V => "V",
        }
    }

    fn read(self, rgb: [f64; 3], hsv: [f64; 3]) -> f64 {
        match self {
            Channel::R => rgb[0],
            Channel::G => rgb[1],
            Channel::B => rgb[2],
            Channel::H => hsv[0],
            Channel::S => hsv[1],
            Channel::V => hsv[2],
        }
    }

    /// Parses a comma-separated list such as `r,g,b,h,s,v`.
    pub fn parse_list(list: &str) -> Result<Vec<Channel>> {
        list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == t)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown channel `{s}`")))
    }
}

/// Pairwise Pearson coefficients between channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub channels: Vec<Channel>,
    /// Row-major `n × n`.
    pub values: Vec<f64>,
    pub sample_count: usize,
    /// Row-major `n × n`; set when either channel of the pair has zero variance.
    pub degenerate: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.channels.len()
    }

    pub fn get(&self, a: Channel, b: Channel) -> Option<f64> {
        let (i, j) = (self.index(a)?, self.index(b)?);
        Some(self.values[i * self.size() + j])
    }

    pub fn is_degenerate(&self, a: Channel, b: Channel) -> Option<bool> {
        let (i, j) = (self.index(a)?, self.index(b)?);
        Some(self.degenerate[i * self.size() + j])
    }

    fn index(&self, c: Channel) -> Option<usize> {
        self.channels.iter().position(|&x| x == c)
    }

    /// Header row of channel names, then one row of coefficients per channel.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let names: Vec<&str> = self.channels.iter().map(|c| c.name()).collect();
        writeln!(out, "{}", names.join(","))?;
        for row in self.values.chunks(self.size()) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Pearson correlation between `channels` over a seeded uniform pixel
/// subsample of at most `sample_budget` pixels pooled across `corpus`.
///
/// Pairs involving a zero-variance channel are flagged degenerate and
/// reported as 0.
pub fn channel_correlation<T: Scalar>(
    corpus: &[Image<T>],
    channels: &[Channel],
    sample_budget: usize,
    seed: u64,
) -> Result<CorrelationMatrix> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("correlation corpus is empty".into()));
    }
    if sample_budget < 2 {
        return Err(Error::InvalidArgument(format!("sample budget must be at least 2, got {sample_budget}")));
    }
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no channels requested".into()));
    }
    for img in corpus {
        img.expect_space(ColorSpace::Rgb)?;
    }
    let offsets: Vec<usize> = corpus
        .iter()
        .scan(0usize, |acc, img| {
            let start = *acc;
            *acc += img.pixel_count();
            Some(start)
        })
        .collect();
    let total: usize = corpus.iter().map(Image::pixel_count).sum();
    let picks: Vec<usize> = if sample_budget >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = rand::seq::index::sample(&mut rng, total, sample_budget).into_vec();
        v.sort_unstable();
        v
    };

    let n = channels.len();
    let mut moments = CoMoments::new(n);
    let mut sample = vec![0.0; n];
    for &global in &picks {
        let img_idx = offsets.partition_point(|&o| o <= global) - 1;
        let local = global - offsets[img_idx];
        let p = &corpus[img_idx].data()[local * 3..local * 3 + 3];
        let rgb = [p[0].to_f64_lossy(), p[1].to_f64_lossy(), p[2].to_f64_lossy()];
        let hsv = rgb_to_hsv_pixel(rgb);
        for (s, c) in sample.iter_mut().zip(channels) {
            *s = c.read(rgb, hsv);
        }
        moments.push(&sample);
    }

    let mut values = vec![0.0; n * n];
    let mut degenerate = vec![false; n * n];
    for i in 0..n {
        for j in i..n {
            let (vi, vj) = (moments.comoment(i, i), moments.comoment(j, j));
            let flat = vi <= f64::MIN_POSITIVE || vj <= f64::MIN_POSITIVE;
            let r = if flat { 0.0 } else if i == j { 1.0 } else { (moments.comoment(i, j) / (vi * vj).sqrt()).clamp(-1.0, 1.0) };
            values[i * n + j] = r;
            values[j * n + i] = r;
            degenerate[i * n + j] = flat;
            degenerate[j * n + i] = flat;
        }
    }
    Ok(CorrelationMatrix { channels: channels.to_vec(), values, sample_count: picks.len(), degenerate })
}

/// Streaming means and co-moments (Welford's update).
struct CoMoments {
    n: f64,
    mean: Vec<f64>,
    c: Vec<f64>,
}

impl CoMoments {
    fn new(dim: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; dim], c: vec![0.0; dim * dim] }
    }

    fn push(&mut self, x: &[f64]) {
        let d = self.mean.len();
        self.n += 1.0;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, delta) in self.mean.iter_mut().zip(&before) {
            *m += delta / self.n;
        }
        for i in 0..d {
            for j in i..d {
                self.c[i * d + j] += before[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn comoment(&self, i: usize, j: usize) -> f64 {
        let d = self.mean.len();
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.c[a * d + b]
    }
}
