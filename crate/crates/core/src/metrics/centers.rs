use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io;

/// Alpha-weighted mean pixel coordinate `(x, y)` of one `[H, W]` map, in
/// pixel indices. A map without mass gives the image midpoint.
pub fn attention_center(alpha: &[f32], height: usize, width: usize) -> (f64, f64) {
    let (mut total, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    for y in 0..height {
        for x in 0..width {
            let a = alpha[y * width + x] as f64;
            total += a;
            sx += a * x as f64;
            sy += a * y as f64;
        }
    }
    if total <= 0.0 {
        return ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    }
    (sx / total, sy / total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterRecord {
    pub scene_id: String,
    pub slot: usize,
    pub cx: f64,
    pub cy: f64,
}

/// Spread of each slot's center across scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterSummary {
    /// Population variance `var(cx) + var(cy)` per slot, in pixels².
    pub per_slot_variance: Vec<f64>,
    pub mean_variance: f64,
    pub floor: f64,
    /// Mean variance below `floor`: slots bind fixed image regions.
    pub degenerate: bool,
}

/// Default degeneration floor: centers moving less than 5% of the image side.
pub fn default_center_floor(image_size: usize) -> f64 {
    (0.05 * image_size as f64).powi(2)
}

pub fn summarize_centers(records: &[CenterRecord], slots: usize, floor: f64) -> CenterSummary {
    let per_slot_variance: Vec<f64> = (0..slots)
        .map(|k| {
            let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.slot == k).map(|r| (r.cx, r.cy)).collect();
            if pts.is_empty() {
                return 0.0;
            }
            let n = pts.len() as f64;
            let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
            pts.iter().map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2)).sum::<f64>() / n
        })
        .collect();
    let mean_variance = per_slot_variance.iter().sum::<f64>() / slots.max(1) as f64;
    CenterSummary { per_slot_variance, mean_variance, floor, degenerate: mean_variance < floor }
}

/// `scene_id,slot_id,cx,cy` rows for plotting.
pub fn write_centers_csv(path: &Path, records: &[CenterRecord]) -> Result<()> {
    let mut text = String::from("scene_id,slot_id,cx,cy\n");
    for r in records {
        writeln!(text, "{},{},{},{}", r.scene_id, r.slot, r.cx, r.cy).expect("writing to a String");
    }
    io::write_bytes(path, text.as_bytes())
}
