//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Outcome of one probed coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// False when the ±h evaluations fall on different sides of a ReLU kink.
    pub differentiable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub step: f64,
}

impl GradCheckReport {
    /// Largest relative error among differentiable probes.
    pub fn max_rel_error(&self) -> f64 {
        self.probes.iter().filter(|p| p.differentiable).map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn non_differentiable(&self) -> usize {
        self.probes.iter().filter(|p| !p.differentiable).count()
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() <= tolerance
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of the scalar `f` at `point` against central
/// differences with step `step` at `probes` random coordinates.
///
/// Coordinates cycle through the input tensors so every input is probed.
pub fn grad_check<F>(f: F, point: &[Tensor<f64>], probes: usize, step: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |inputs: &[Tensor<f64>]| -> Result<(f64, u64)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok((g.value(out).item(), g.kink_signature()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = point.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let base_signature = g.kink_signature();
    let on_kink = g.min_kink_distance().is_some_and(|d| d == 0.0);
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = point
        .iter()
        .zip(&vars)
        .map(|(t, &v)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<usize> = (0..point.len()).filter(|&i| !point[i].is_empty()).collect();
    let mut report = Vec::with_capacity(probes);
    if candidates.is_empty() {
        return Ok(GradCheckReport { probes: report, step });
    }
    let mut shifted = point.to_vec();
    for p in 0..probes {
        let tensor = candidates[p % candidates.len()];
        let index = rng.random_range(0..point[tensor].len());
        let original = point[tensor].data()[index];
        shifted[tensor].data_mut()[index] = original + step;
        let (plus, sig_plus) = eval(&shifted)?;
        shifted[tensor].data_mut()[index] = original - step;
        let (minus, sig_minus) = eval(&shifted)?;
        shifted[tensor].data_mut()[index] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[tensor].data()[index];
        report.push(Probe {
            tensor,
            index,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
            differentiable: !on_kink && sig_plus == base_signature && sig_minus == base_signature,
        });
    }
    Ok(GradCheckReport { probes: report, step })
}
