use serde::{Deserialize, Serialize};

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

/// Scores at one light distance. Distances compare each object's slot with
/// its slot in the unlit scene and are divided by the reference distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightingCondition {
    pub light_distance: f64,
    pub fg_ari: Option<f64>,
    pub miou: f64,
    pub cosine: Option<Stat>,
    pub euclidean: Option<Stat>,
    /// Objects matched at both light distances.
    pub pairs: usize,
    /// Objects without a slot at either light distance.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Mean cosine distance over all slot pairs of the unlit scenes.
    pub reference_cosine: Option<f64>,
    /// Mean Euclidean distance over all slot pairs of the unlit scenes.
    pub reference_euclidean: Option<f64>,
    pub conditions: Vec<LightingCondition>,
}

pub fn cosine_distance(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

pub fn euclidean_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>().sqrt()
}
