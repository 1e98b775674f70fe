use super::hungarian::max_weight_assignment;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-scene prediction: argmax labels plus the maps they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationPrediction {
    pub num_slots: usize,
    pub height: usize,
    pub width: usize,
    /// Slot index per pixel, row-major.
    pub pixel_labels: Vec<usize>,
    /// Alpha masks `[K, H, W]`.
    pub alpha: Vec<f32>,
    /// Slot vectors `[K, D]`.
    pub slots: Vec<f32>,
}

impl SegmentationPrediction {
    pub fn from_alpha(alpha: Vec<f32>, slots: Vec<f32>, num_slots: usize, height: usize, width: usize) -> Result<Self> {
        if alpha.len() != num_slots * height * width || num_slots == 0 || !slots.len().is_multiple_of(num_slots) {
            return Err(Error::Shape(format!(
                "alpha of {} values and slots of {} values do not fit K = {num_slots}, {height}x{width}",
                alpha.len(),
                slots.len()
            )));
        }
        let pixel_labels = argmax_labels(&alpha, num_slots, height * width);
        Ok(Self { num_slots, height, width, pixel_labels, alpha, slots })
    }

    pub fn slot_dim(&self) -> usize {
        self.slots.len() / self.num_slots
    }

    pub fn slot(&self, k: usize) -> &[f32] {
        let d = self.slot_dim();
        &self.slots[k * d..(k + 1) * d]
    }
}

/// Per-pixel argmax over `[K, P]` maps; ties go to the lower slot index.
pub fn argmax_labels<T: Scalar>(maps: &[T], k: usize, pixels: usize) -> Vec<usize> {
    (0..pixels)
        .map(|p| {
            let mut best = 0;
            for s in 1..k {
                if maps[s * pixels + p] > maps[best * pixels + p] {
                    best = s;
                }
            }
            best
        })
        .collect()
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let max = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut map = vec![usize::MAX; max];
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect();
    (out, next)
}

/// Adjusted Rand Index between two labelings of the same items, from the
/// pair-confusion counts. Identical partitions score 1, including the
/// degenerate single-cluster and all-singleton cases.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("labelings of length {} and {}", a.len(), b.len())));
    }
    let n = a.len() as u128;
    let (a, ka) = relabel(a);
    let (b, kb) = relabel(b);
    let mut table = vec![0u128; ka * kb];
    for (&i, &j) in a.iter().zip(&b) {
        table[i * kb + j] += 1;
    }
    let mut rows = vec![0u128; ka];
    let mut cols = vec![0u128; kb];
    let mut sum_sq = 0u128;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i * kb + j];
            rows[i] += c;
            cols[j] += c;
            sum_sq += c * c;
        }
    }
    // ordered pair counts: together in both / only in b / only in a / in neither
    let both = sum_sq - n;
    let only_b = cols.iter().map(|c| c * c).sum::<u128>() - sum_sq;
    let only_a = rows.iter().map(|r| r * r).sum::<u128>() - sum_sq;
    let neither = n * n - only_b - only_a - sum_sq;
    if only_a == 0 && only_b == 0 {
        return Ok(1.0);
    }
    let (tp, tn, fp, fn_) = (both as f64, neither as f64, only_a as f64, only_b as f64);
    Ok(2.0 * (tp * tn - fn_ * fp) / ((tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn)))
}

/// ARI restricted to pixels whose ground-truth label is not 0 (background).
/// `None` when the scene has no foreground pixel.
pub fn fg_ari(pred: &[usize], gt: &[usize]) -> Result<Option<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("prediction has {} pixels, ground truth {}", pred.len(), gt.len())));
    }
    let (p, g): (Vec<usize>, Vec<usize>) = pred.iter().zip(gt).filter(|(_, &g)| g != 0).map(|(&p, &g)| (p, g)).unzip();
    if p.is_empty() {
        return Ok(None);
    }
    adjusted_rand_index(&p, &g).map(Some)
}

/// IoU matrix `[segments, slots]` between ground-truth segments and the
/// binary masks of the predicted labels.
pub fn iou_matrix(pred: &[usize], slots: usize, gt: &[usize], segments: usize) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("prediction has {} pixels, ground truth {}", pred.len(), gt.len())));
    }
    let mut inter = vec![0usize; segments * slots];
    let mut gt_area = vec![0usize; segments];
    let mut pred_area = vec![0usize; slots];
    for (&p, &g) in pred.iter().zip(gt) {
        if p >= slots || g >= segments {
            return Err(Error::InvalidArgument(format!("label out of range: slot {p} of {slots}, segment {g} of {segments}")));
        }
        inter[g * slots + p] += 1;
        gt_area[g] += 1;
        pred_area[p] += 1;
    }
    Ok((0..segments * slots)
        .map(|i| {
            let (g, p) = (i / slots, i % slots);
            let union = gt_area[g] + pred_area[p] - inter[i];
            if union == 0 {
                0.0
            } else {
                inter[i] as f64 / union as f64
            }
        })
        .collect())
}

/// Mean over segments of the IoU under the one-to-one assignment that
/// maximizes total IoU; unassigned segments count 0.
pub fn miou_from_iou(iou: &[f64], segments: usize, slots: usize) -> f64 {
    if segments == 0 {
        return 0.0;
    }
    let assignment = max_weight_assignment(iou, segments, slots);
    let total: f64 = assignment.iter().enumerate().map(|(g, s)| s.map_or(0.0, |s| iou[g * slots + s])).sum();
    total / segments as f64
}

/// mIoU over all ground-truth segments, background included.
pub fn miou(pred: &[usize], slots: usize, gt: &[usize], segments: usize) -> Result<f64> {
    Ok(miou_from_iou(&iou_matrix(pred, slots, gt, segments)?, segments, slots))
}

/// For every foreground object `1..segments`, the slot whose argmax mask
/// overlaps it most (ties to the lower slot); `None` without any overlap.
pub fn match_slots(pred: &[usize], slots: usize, gt: &[usize], segments: usize) -> Result<Vec<Option<usize>>> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("prediction has {} pixels, ground truth {}", pred.len(), gt.len())));
    }
    let mut overlap = vec![0usize; segments * slots];
    for (&p, &g) in pred.iter().zip(gt) {
        if p < slots && g < segments {
            overlap[g * slots + p] += 1;
        }
    }
    Ok((1..segments)
        .map(|g| {
            let row = &overlap[g * slots..(g + 1) * slots];
            let mut best = None;
            for (s, &c) in row.iter().enumerate() {
                if c > 0 && best.is_none_or(|b: usize| c > row[b]) {
                    best = Some(s);
                }
            }
            best
        })
        .collect())
}
