//! Bounding boxes, image patches, and the selection algebra used to answer
//! "which one" questions over a set of detections.
//!
//! Pixel coordinates are continuous `f64` with the origin at the top-left
//! corner of the frame and y growing downward, so "top row" means smallest
//! centroid v and "leftmost" means smallest centroid u.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max}): {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("empty patch list")]
    EmptyInput,
    #[error("ordinal position {position} out of range for {count} patches")]
    OrdinalOutOfRange { position: i64, count: usize },
    #[error("row {row} out of range for {count} rows")]
    RowOutOfRange { row: i64, count: usize },
    #[error("gap threshold {0} must be finite and positive")]
    InvalidThreshold(f64),
}

/// Axis-aligned pixel rectangle. Invariants are enforced at construction:
/// all coordinates finite and non-negative, `x_min < x_max`, `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeomError> {
        let reject = |reason| GeomError::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(reject("coordinate not finite"));
        }
        if coords.iter().any(|c| *c < 0.0) {
            return Err(reject("coordinate negative"));
        }
        if x_min >= x_max {
            return Err(reject("x_min must be strictly less than x_max"));
        }
        if y_min >= y_max {
            return Err(reject("y_min must be strictly less than y_max"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Center of the box as `(u, v)` pixel coordinates.
    pub fn centroid(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Smallest box containing both `self` and `other`.
    pub fn hull(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Intersection over union; 0.0 for disjoint boxes.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Clip to a `width` x `height` frame. Returns `None` when nothing of the
    /// box remains inside the frame.
    pub fn clip_to_frame(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let x_min = self.x_min.max(0.0);
        let y_min = self.y_min.max(0.0);
        let x_max = self.x_max.min(width);
        let y_max = self.y_max.min(height);
        if x_min >= x_max || y_min >= y_max {
            return None;
        }
        Some(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }
}

/// One detection: a box plus the label it was produced for, a confidence,
/// the frame it came from, and (for oracle backends) the ground-truth object
/// behind it. Grading and grasping always go through `object_id`, never the
/// label text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePatch {
    pub bbox: BoundingBox,
    pub label: String,
    pub confidence: f64,
    pub frame_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_id: Option<String>,
}

impl ImagePatch {
    pub fn new(
        bbox: BoundingBox,
        label: impl Into<String>,
        confidence: f64,
        frame_id: u64,
        object_id: Option<String>,
    ) -> Result<Self, GeomError> {
        if !(0.0..=1.0).contains(&confidence) || confidence.is_nan() {
            return Err(GeomError::InvalidConfidence(confidence));
        }
        Ok(Self {
            bbox,
            label: label.into(),
            confidence,
            frame_id,
            object_id,
        })
    }

    pub fn centroid(&self) -> (f64, f64) {
        self.bbox.centroid()
    }

    pub fn area(&self) -> f64 {
        self.bbox.area()
    }
}

/// Sort key for [`sort_patches`]. `X` and `Y` sort by centroid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    X,
    Y,
    Area,
    Width,
    Height,
}

impl SortKey {
    fn value(&self, p: &ImagePatch) -> f64 {
        match self {
            SortKey::X => p.centroid().0,
            SortKey::Y => p.centroid().1,
            SortKey::Area => p.bbox.area(),
            SortKey::Width => p.bbox.width(),
            SortKey::Height => p.bbox.height(),
        }
    }
}

/// Reading direction for ordinal selection. `FromLeft` counts along
/// increasing centroid u, `FromTop` along increasing centroid v, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    FromLeft,
    FromRight,
    FromTop,
    FromBottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dim {
    Width,
    Height,
    Area,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extreme {
    Min,
    Max,
}

// Deterministic tie-break shared by every ordering in this module: when both
// patches carry object ids compare those, otherwise fall back to the original
// slice position. Equal-key patches without ids therefore keep input order.
fn tie_break(a: (&ImagePatch, usize), b: (&ImagePatch, usize)) -> std::cmp::Ordering {
    match (&a.0.object_id, &b.0.object_id) {
        (Some(x), Some(y)) if x != y => x.cmp(y),
        _ => a.1.cmp(&b.1),
    }
}

fn ordered_indices(patches: &[ImagePatch], key: SortKey) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..patches.len()).collect();
    idx.sort_by(|&a, &b| {
        let ka = key.value(&patches[a]);
        let kb = key.value(&patches[b]);
        ka.partial_cmp(&kb)
            .expect("patch keys are finite by construction")
            .then_with(|| tie_break((&patches[a], a), (&patches[b], b)))
    });
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    Asc,
    Desc,
}

/// Stable sort by `key`. Ties are broken by object id when both patches
/// have one, else by original position; descending is the exact reverse of
/// ascending.
pub fn sort_patches(
    patches: &[ImagePatch],
    key: SortKey,
    order: SortOrder,
) -> Result<Vec<ImagePatch>, GeomError> {
    if patches.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let mut out: Vec<ImagePatch> = ordered_indices(patches, key)
        .into_iter()
        .map(|i| patches[i].clone())
        .collect();
    if order == SortOrder::Desc {
        out.reverse();
    }
    Ok(out)
}

/// Default row-gap threshold: 0.6 x median patch height. Chosen so rows of
/// similar objects split on gaps clearly larger than within-row jitter.
pub fn default_gap_threshold(patches: &[ImagePatch]) -> f64 {
    let mut heights: Vec<f64> = patches.iter().map(|p| p.bbox.height()).collect();
    heights.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = heights.len();
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        heights[n / 2]
    } else {
        (heights[n / 2 - 1] + heights[n / 2]) / 2.0
    };
    0.6 * median
}

/// Single-linkage clustering of patches into horizontal rows by centroid v.
///
/// Patches are ordered by centroid v; a gap between consecutive centroids
/// greater than `gap_threshold` starts a new row. Rows come back
/// top-to-bottom, members left-to-right. `None` uses
/// [`default_gap_threshold`].
pub fn cluster_rows(
    patches: &[ImagePatch],
    gap_threshold: Option<f64>,
) -> Result<Vec<Vec<ImagePatch>>, GeomError> {
    if patches.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let threshold = match gap_threshold {
        Some(t) if !t.is_finite() || t <= 0.0 => return Err(GeomError::InvalidThreshold(t)),
        Some(t) => t,
        None => default_gap_threshold(patches),
    };
    let by_v = ordered_indices(patches, SortKey::Y);
    let mut rows: Vec<Vec<usize>> = vec![vec![by_v[0]]];
    let mut prev_v = patches[by_v[0]].centroid().1;
    for &i in &by_v[1..] {
        let v = patches[i].centroid().1;
        if v - prev_v > threshold {
            rows.push(Vec::new());
        }
        rows.last_mut().expect("at least one row").push(i);
        prev_v = v;
    }
    Ok(rows
        .into_iter()
        .map(|row_idx| {
            let mut row: Vec<usize> = row_idx;
            row.sort_by(|&a, &b| {
                let ua = patches[a].centroid().0;
                let ub = patches[b].centroid().0;
                ua.partial_cmp(&ub)
                    .expect("finite")
                    .then_with(|| tie_break((&patches[a], a), (&patches[b], b)))
            });
            row.into_iter().map(|i| patches[i].clone()).collect()
        })
        .collect())
}

/// Signed 1-based index into a sequence: 1 is the first element, -1 the
/// last. 0 and anything past either end is None.
pub fn signed_index(position: i64, len: usize) -> Option<usize> {
    let n = len as i64;
    if position == 0 || position.abs() > n {
        return None;
    }
    let zero_based = if position > 0 {
        position - 1
    } else {
        n + position
    };
    Some(zero_based as usize)
}

/// Pick the patch at a signed 1-based `position` along `axis`.
///
/// Negative positions count from the far end (-1 = last). When `row_spec` is
/// given the patches are first clustered into rows (default threshold) and
/// the signed row index picks one row, counted top-to-bottom; the ordinal
/// then applies within that row.
pub fn select_ordinal(
    patches: &[ImagePatch],
    position: i64,
    axis: Axis,
    row_spec: Option<i64>,
) -> Result<ImagePatch, GeomError> {
    if patches.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let pool: Vec<ImagePatch> = match row_spec {
        None => patches.to_vec(),
        Some(row) => {
            let rows = cluster_rows(patches, None)?;
            let idx = signed_index(row, rows.len()).ok_or(GeomError::RowOutOfRange {
                row,
                count: rows.len(),
            })?;
            rows[idx].clone()
        }
    };
    let (key, reversed) = match axis {
        Axis::FromLeft => (SortKey::X, false),
        Axis::FromRight => (SortKey::X, true),
        Axis::FromTop => (SortKey::Y, false),
        Axis::FromBottom => (SortKey::Y, true),
    };
    let mut ordered = ordered_indices(&pool, key);
    if reversed {
        ordered.reverse();
    }
    let idx = signed_index(position, ordered.len()).ok_or(GeomError::OrdinalOutOfRange {
        position,
        count: ordered.len(),
    })?;
    Ok(pool[ordered[idx]].clone())
}

/// "The middle one": position ceil(n/2) along `axis`, counting within the
/// selected row when `row_spec` is given.
pub fn select_middle(
    patches: &[ImagePatch],
    axis: Axis,
    row_spec: Option<i64>,
) -> Result<ImagePatch, GeomError> {
    if patches.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let count = match row_spec {
        None => patches.len(),
        Some(row) => {
            let rows = cluster_rows(patches, None)?;
            let idx = signed_index(row, rows.len()).ok_or(GeomError::RowOutOfRange {
                row,
                count: rows.len(),
            })?;
            rows[idx].len()
        }
    };
    let middle = (count as i64 + 1) / 2;
    select_ordinal(patches, middle, axis, row_spec)
}

/// Pick the patch extremizing `dim`. Ties go to the patch with the smaller
/// centroid u, then the smaller centroid v.
pub fn select_superlative(
    patches: &[ImagePatch],
    dim: Dim,
    extreme: Extreme,
) -> Result<ImagePatch, GeomError> {
    if patches.is_empty() {
        return Err(GeomError::EmptyInput);
    }
    let value = |p: &ImagePatch| match dim {
        Dim::Width => p.bbox.width(),
        Dim::Height => p.bbox.height(),
        Dim::Area => p.bbox.area(),
    };
    let better = |a: f64, b: f64| match extreme {
        Extreme::Max => a > b,
        Extreme::Min => a < b,
    };
    let mut best = 0;
    for i in 1..patches.len() {
        let (vi, vb) = (value(&patches[i]), value(&patches[best]));
        if better(vi, vb) {
            best = i;
            continue;
        }
        if vi == vb {
            let (ci, cb) = (patches[i].centroid(), patches[best].centroid());
            if ci.0 < cb.0 || (ci.0 == cb.0 && ci.1 < cb.1) {
                best = i;
            }
        }
    }
    Ok(patches[best].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(x_min: f64, y_min: f64, x_max: f64, y_max: f64, id: Option<&str>) -> ImagePatch {
        ImagePatch::new(
            BoundingBox::new(x_min, y_min, x_max, y_max).unwrap(),
            "obj",
            1.0,
            0,
            id.map(str::to_owned),
        )
        .unwrap()
    }

    // Patch centered at (u, v) with the given width and height.
    fn at(u: f64, v: f64, w: f64, h: f64) -> ImagePatch {
        patch(u - w / 2.0, v - h / 2.0, u + w / 2.0, v + h / 2.0, None)
    }

    #[test]
    fn centroid_of_example_boxes() {
        let b = BoundingBox::new(10.0, 20.0, 30.0, 60.0).unwrap();
        assert_eq!(b.centroid(), (20.0, 40.0));
        let b = BoundingBox::new(75.0, 75.0, 125.0, 125.0).unwrap();
        assert_eq!(b.centroid(), (100.0, 100.0));
    }

    #[test]
    fn area_of_unit_example() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(b.area(), 100.0);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(matches!(
            BoundingBox::new(1.0, 1.0, 1.0, 5.0),
            Err(GeomError::InvalidBox { .. })
        ));
        assert!(BoundingBox::new(5.0, 1.0, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(-1.0, 0.0, 1.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 5.0).is_err());
        assert!(BoundingBox::new(0.0, f64::NAN, 1.0, 5.0).is_err());
    }

    #[test]
    fn confidence_validated() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(ImagePatch::new(b, "x", 1.2, 0, None).is_err());
        assert!(ImagePatch::new(b, "x", -0.1, 0, None).is_err());
        assert!(ImagePatch::new(b, "x", 0.0, 0, None).is_ok());
    }

    #[test]
    fn sort_by_x_orders_centroids() {
        let ps = vec![at(40.0, 0.5, 4.0, 1.0), at(10.0, 0.5, 4.0, 1.0), at(25.0, 0.5, 4.0, 1.0)];
        let sorted = sort_patches(&ps, SortKey::X, SortOrder::Asc).unwrap();
        let us: Vec<f64> = sorted.iter().map(|p| p.centroid().0).collect();
        assert_eq!(us, vec![10.0, 25.0, 40.0]);
    }

    #[test]
    fn sort_desc_reverses_asc() {
        let ps = vec![at(40.0, 0.5, 4.0, 1.0), at(10.0, 0.5, 4.0, 1.0), at(25.0, 0.5, 4.0, 1.0)];
        let asc = sort_patches(&ps, SortKey::X, SortOrder::Asc).unwrap();
        let mut desc = sort_patches(&ps, SortKey::X, SortOrder::Desc).unwrap();
        desc.reverse();
        assert_eq!(asc, desc);
    }

    #[test]
    fn sort_is_stable_on_equal_keys() {
        let mut a = at(10.0, 5.0, 4.0, 2.0);
        a.label = "first".into();
        let mut b = at(10.0, 9.0, 4.0, 2.0);
        b.label = "second".into();
        // Equal centroid u, no object ids: input order must survive.
        let sorted = sort_patches(&[a.clone(), b.clone()], SortKey::X, SortOrder::Asc).unwrap();
        assert_eq!(sorted[0].label, "first");
        assert_eq!(sorted[1].label, "second");
        let sorted = sort_patches(&[b.clone(), a.clone()], SortKey::X, SortOrder::Asc).unwrap();
        assert_eq!(sorted[0].label, "second");
    }

    #[test]
    fn sort_ties_use_object_id_when_present() {
        let a = patch(0.0, 0.0, 10.0, 10.0, Some("z"));
        let b = patch(0.0, 0.0, 10.0, 10.0, Some("a"));
        let sorted = sort_patches(&[a, b], SortKey::X, SortOrder::Asc).unwrap();
        assert_eq!(sorted[0].object_id.as_deref(), Some("a"));
    }

    #[test]
    fn sort_empty_is_error() {
        assert_eq!(sort_patches(&[], SortKey::X, SortOrder::Asc), Err(GeomError::EmptyInput));
    }

    #[test]
    fn cluster_rows_splits_on_gap() {
        // Centroid v values 10, 12, 50 with threshold 20 -> rows {10, 12} and {50}.
        let ps = vec![at(5.0, 10.0, 4.0, 4.0), at(15.0, 12.0, 4.0, 4.0), at(5.0, 50.0, 4.0, 4.0)];
        let rows = cluster_rows(&ps, Some(20.0)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), 2);
        assert_eq!(rows[1].len(), 1);
        assert_eq!(rows[0][0].centroid().1, 10.0);
        assert_eq!(rows[1][0].centroid().1, 50.0);
    }

    #[test]
    fn cluster_rows_members_run_left_to_right() {
        let ps = vec![at(30.0, 10.0, 4.0, 4.0), at(10.0, 11.0, 4.0, 4.0), at(20.0, 9.0, 4.0, 4.0)];
        let rows = cluster_rows(&ps, Some(20.0)).unwrap();
        assert_eq!(rows.len(), 1);
        let us: Vec<f64> = rows[0].iter().map(|p| p.centroid().0).collect();
        assert_eq!(us, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn cluster_rows_default_threshold_uses_median_height() {
        // Heights 10, 10, 10 -> threshold 6. Rows at v = 0..10 split only on
        // gaps > 6.
        let ps = vec![at(5.0, 10.0, 4.0, 10.0), at(10.0, 15.0, 4.0, 10.0), at(20.0, 25.0, 4.0, 10.0)];
        let rows = cluster_rows(&ps, None).unwrap();
        assert_eq!(rows.len(), 2); // gap 5 keeps, gap 10 splits
    }

    #[test]
    fn ordinal_from_left_and_negative() {
        let ps = vec![at(40.0, 5.0, 4.0, 4.0), at(10.0, 5.0, 4.0, 4.0), at(25.0, 5.0, 4.0, 4.0)];
        let p = select_ordinal(&ps, 2, Axis::FromLeft, None).unwrap();
        assert_eq!(p.centroid().0, 25.0);
        let p = select_ordinal(&ps, -1, Axis::FromLeft, None).unwrap();
        assert_eq!(p.centroid().0, 40.0);
        let p = select_ordinal(&ps, 1, Axis::FromRight, None).unwrap();
        assert_eq!(p.centroid().0, 40.0);
    }

    #[test]
    fn ordinal_out_of_range() {
        let ps = vec![at(10.0, 5.0, 4.0, 4.0)];
        assert!(matches!(
            select_ordinal(&ps, 2, Axis::FromLeft, None),
            Err(GeomError::OrdinalOutOfRange { position: 2, count: 1 })
        ));
        assert!(matches!(
            select_ordinal(&ps, 0, Axis::FromLeft, None),
            Err(GeomError::OrdinalOutOfRange { .. })
        ));
        assert!(matches!(
            select_ordinal(&ps, -2, Axis::FromLeft, None),
            Err(GeomError::OrdinalOutOfRange { .. })
        ));
    }

    #[test]
    fn ordinal_with_row_spec() {
        // Two rows: top row at v=10 (u = 10, 30), bottom row at v=40 (u = 20, 50).
        let ps = vec![
            at(30.0, 10.0, 6.0, 6.0),
            at(10.0, 10.0, 6.0, 6.0),
            at(50.0, 40.0, 6.0, 6.0),
            at(20.0, 40.0, 6.0, 6.0),
        ];
        // Second patch from the left in the last row.
        let p = select_ordinal(&ps, 2, Axis::FromLeft, Some(-1)).unwrap();
        assert_eq!(p.centroid(), (50.0, 40.0));
        // First from the right in row 1 (top).
        let p = select_ordinal(&ps, 1, Axis::FromRight, Some(1)).unwrap();
        assert_eq!(p.centroid(), (30.0, 10.0));
        assert!(matches!(
            select_ordinal(&ps, 1, Axis::FromLeft, Some(3)),
            Err(GeomError::RowOutOfRange { row: 3, count: 2 })
        ));
        assert!(matches!(
            select_ordinal(&ps, 1, Axis::FromLeft, Some(-3)),
            Err(GeomError::RowOutOfRange { .. })
        ));
    }

    #[test]
    fn middle_is_ceil_half() {
        // n = 4 -> position 2; n = 5 -> position 3.
        let ps4: Vec<ImagePatch> = (0..4).map(|i| at(10.0 * i as f64 + 5.0, 5.0, 4.0, 4.0)).collect();
        assert_eq!(select_middle(&ps4, Axis::FromLeft, None).unwrap().centroid().0, 15.0);
        let ps5: Vec<ImagePatch> = (0..5).map(|i| at(10.0 * i as f64 + 5.0, 5.0, 4.0, 4.0)).collect();
        assert_eq!(select_middle(&ps5, Axis::FromLeft, None).unwrap().centroid().0, 25.0);
    }

    #[test]
    fn superlative_largest_area() {
        let ps = vec![at(20.0, 20.0, 10.0, 10.0), at(60.0, 20.0, 10.0, 20.0)];
        let p = select_superlative(&ps, Dim::Area, Extreme::Max).unwrap();
        assert_eq!(p.centroid().0, 60.0);
        let p = select_superlative(&ps, Dim::Area, Extreme::Min).unwrap();
        assert_eq!(p.centroid().0, 20.0);
    }

    #[test]
    fn superlative_tie_breaks_leftmost_then_topmost() {
        let ps = vec![at(60.0, 20.0, 10.0, 10.0), at(20.0, 20.0, 10.0, 10.0)];
        let p = select_superlative(&ps, Dim::Area, Extreme::Max).unwrap();
        assert_eq!(p.centroid().0, 20.0);
        let ps = vec![at(20.0, 50.0, 10.0, 10.0), at(20.0, 20.0, 10.0, 10.0)];
        let p = select_superlative(&ps, Dim::Area, Extreme::Max).unwrap();
        assert_eq!(p.centroid().1, 20.0);
    }

    #[test]
    fn empty_inputs_error() {
        assert_eq!(cluster_rows(&[], None), Err(GeomError::EmptyInput));
        assert_eq!(
            select_ordinal(&[], 1, Axis::FromLeft, None),
            Err(GeomError::EmptyInput)
        );
        assert_eq!(
            select_superlative(&[], Dim::Area, Extreme::Max),
            Err(GeomError::EmptyInput)
        );
        assert_eq!(select_middle(&[], Axis::FromLeft, None), Err(GeomError::EmptyInput));
    }

    #[test]
    fn iou_and_hull() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let b = BoundingBox::new(5.0, 5.0, 15.0, 15.0).unwrap();
        let inter = 25.0;
        let union = 100.0 + 100.0 - inter;
        assert!((a.iou(&b) - inter / union).abs() < 1e-12);
        let h = a.hull(&b);
        assert_eq!((h.x_min, h.y_min, h.x_max, h.y_max), (0.0, 0.0, 15.0, 15.0));
        let c = BoundingBox::new(20.0, 20.0, 30.0, 30.0).unwrap();
        assert_eq!(a.iou(&c), 0.0);
    }

    #[test]
    fn clip_to_frame_drops_outside_boxes() {
        let b = BoundingBox::new(190.0, 50.0, 260.0, 80.0).unwrap();
        let clipped = b.clip_to_frame(200.0, 200.0).unwrap();
        assert_eq!(clipped.x_max, 200.0);
        let outside = BoundingBox::new(210.0, 50.0, 260.0, 80.0).unwrap();
        assert!(outside.clip_to_frame(200.0, 200.0).is_none());
    }
}
