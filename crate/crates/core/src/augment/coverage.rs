use std::collections::BTreeSet;

use crate::grounding::BBox;

/// Fraction of the `width` x `height` image covered by the union of boxes,
/// computed exactly by coordinate compression. Boxes are clipped to the
/// image first.
pub fn compute_coverage(boxes: &BTreeSet<BBox>, width: f64, height: f64) -> f64 {
    if width <= 0.0 || height <= 0.0 {
        return 0.0;
    }
    let rects: Vec<[f64; 4]> = boxes
        .iter()
        .map(|b| [b.x1.max(0.0), b.y1.max(0.0), b.x2.min(width), b.y2.min(height)])
        .filter(|r| r[0] < r[2] && r[1] < r[3])
        .collect();
    let mut xs: Vec<f64> = rects.iter().flat_map(|r| [r[0], r[2]]).collect();
    let mut ys: Vec<f64> = rects.iter().flat_map(|r| [r[1], r[3]]).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut area = 0.0;
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let (cx, cy) = ((xw[0] + xw[1]) / 2.0, (yw[0] + yw[1]) / 2.0);
            if rects.iter().any(|r| r[0] <= cx && cx < r[2] && r[1] <= cy && cy < r[3]) {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    (area / (width * height)).clamp(0.0, 1.0)
}
