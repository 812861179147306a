//! Set-level assignment between predicted and padded groundtruth polygons.
//!
//! The pair cost combines a vertex-validity term over all `N` slots with the
//! cyclic coordinate distance between the groundtruth prefix and the equally
//! long prefix of the prediction. Padded groundtruth rows cost nothing, so
//! they soak up whichever predictions the real rows leave behind.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::PaddedTargets;
use crate::error::MatchError;
use crate::geometry::{best_rotation, rasterize_hard, rasterize_soft, Point2, VertexSeq};

/// Network output for one scene: `m` polygons of `n` vertex slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub m: usize,
    pub n: usize,
    /// `m * n` normalized coordinates.
    pub coords: Vec<Point2>,
    /// `m * n` vertex validity probabilities.
    pub probs: Vec<f64>,
    /// Optional `m * classes` semantic logits (last class = empty).
    pub type_logits: Option<Vec<f64>>,
    pub classes: usize,
}

impl Prediction {
    pub fn new(m: usize, n: usize, coords: Vec<Point2>, probs: Vec<f64>) -> Self {
        Self {
            m,
            n,
            coords,
            probs,
            type_logits: None,
            classes: 0,
        }
    }

    pub fn with_type_logits(mut self, logits: Vec<f64>, classes: usize) -> Self {
        self.type_logits = Some(logits);
        self.classes = classes;
        self
    }

    pub fn coords_row(&self, k: usize) -> &[Point2] {
        &self.coords[k * self.n..(k + 1) * self.n]
    }

    pub fn probs_row(&self, k: usize) -> &[f64] {
        &self.probs[k * self.n..(k + 1) * self.n]
    }

    pub fn type_logits_row(&self, k: usize) -> Option<&[f64]> {
        self.type_logits
            .as_ref()
            .map(|l| &l[k * self.classes..(k + 1) * self.classes])
    }

    fn check_against(&self, gt: &PaddedTargets) -> Result<(), MatchError> {
        if self.m != gt.m || self.n != gt.n {
            return Err(MatchError::Shape(format!(
                "prediction is {}x{}, targets are {}x{}",
                self.m, self.n, gt.m, gt.n
            )));
        }
        if self.coords.len() != self.m * self.n || self.probs.len() != self.m * self.n {
            return Err(MatchError::Shape("prediction buffers do not match m*n".into()));
        }
        Ok(())
    }
}

/// How the geometric part of the pair cost is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CostMode {
    /// Cyclic L1 distance between ordered vertex sequences (default).
    Coordinates,
    /// Dice distance between the hard groundtruth mask and the soft mask of
    /// the sliced prediction; the ablation that drops coordinate supervision.
    Mask { resolution: usize, temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub cls: f64,
    pub coord: f64,
    pub mode: CostMode,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            cls: 2.0,
            coord: 5.0,
            mode: CostMode::Coordinates,
        }
    }
}

/// Cost components for one (groundtruth, prediction) pair, already weighted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairCost {
    pub cls: f64,
    pub coord: f64,
}

impl PairCost {
    pub fn total(&self) -> f64 {
        self.cls + self.coord
    }
}

/// Cost of assigning prediction `k` to groundtruth slot `slot`.
pub fn pair_cost(
    gt: &PaddedTargets,
    slot: usize,
    pred: &Prediction,
    k: usize,
    weights: &CostWeights,
) -> Result<PairCost, MatchError> {
    if slot >= gt.gt_count {
        return Ok(PairCost::default());
    }
    let cls: f64 = gt
        .labels_row(slot)
        .iter()
        .zip(pred.probs_row(k))
        .map(|(&c, &p)| libm::fabs(c as f64 - p))
        .sum();
    let len = gt.lengths[slot];
    let pred_prefix = &pred.coords_row(k)[..len];
    let geo = match weights.mode {
        CostMode::Coordinates => best_rotation(gt.polygon(slot), pred_prefix)?.1,
        CostMode::Mask {
            resolution,
            temperature,
        } => {
            let target = rasterize_hard(&VertexSeq(gt.polygon(slot).to_vec()), resolution);
            let soft = rasterize_soft(&VertexSeq(pred_prefix.to_vec()), resolution, temperature)?;
            dice_distance(target.cells(), soft.cells())
        }
    };
    Ok(PairCost {
        cls: weights.cls * cls,
        coord: weights.coord * geo,
    })
}

/// `1 - 2|A∩B| / (|A| + |B|)`, defined as 0 when both masks are empty.
pub fn dice_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut inter, mut sa, mut sb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        inter += x * y;
        sa += x;
        sb += y;
    }
    if sa + sb == 0.0 {
        0.0
    } else {
        1.0 - 2.0 * inter / (sa + sb)
    }
}

/// Result of set-level matching. `perm[slot]` is the prediction index
/// assigned to groundtruth slot `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchAssignment {
    pub perm: Vec<usize>,
    pub per_pair: Vec<PairCost>,
    pub total: f64,
}

impl MatchAssignment {
    /// Inverse permutation: prediction index -> groundtruth slot.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (slot, &k) in self.perm.iter().enumerate() {
            inv[k] = slot;
        }
        inv
    }
}

/// Dense `m x m` cost matrix, row = groundtruth slot, column = prediction.
pub fn cost_matrix(
    gt: &PaddedTargets,
    pred: &Prediction,
    weights: &CostWeights,
) -> Result<Vec<Vec<PairCost>>, MatchError> {
    pred.check_against(gt)?;
    (0..gt.m)
        .map(|slot| (0..pred.m).map(|k| pair_cost(gt, slot, pred, k, weights)).collect())
        .collect()
}

/// Globally optimal assignment of predictions to padded groundtruth.
///
/// Real rows are solved with the Hungarian algorithm; padded rows then take
/// the leftover predictions in increasing index order, which makes ties
/// resolve toward the lowest prediction index.
pub fn match_polygons(
    gt: &PaddedTargets,
    pred: &Prediction,
    weights: &CostWeights,
) -> Result<MatchAssignment, MatchError> {
    let costs = cost_matrix(gt, pred, weights)?;
    let real = gt.gt_count;
    let totals: Vec<Vec<f64>> = costs[..real]
        .iter()
        .map(|row| row.iter().map(PairCost::total).collect())
        .collect();
    let real_cols = hungarian(&totals, pred.m)?;
    let mut used = vec![false; pred.m];
    let mut perm = Vec::with_capacity(gt.m);
    for &k in &real_cols {
        used[k] = true;
        perm.push(k);
    }
    perm.extend((0..pred.m).filter(|&k| !used[k]));
    let per_pair: Vec<PairCost> = perm.iter().enumerate().map(|(s, &k)| costs[s][k]).collect();
    let total = per_pair.iter().map(PairCost::total).sum();
    Ok(MatchAssignment {
        perm,
        per_pair,
        total,
    })
}

/// Minimum-cost assignment of each row to a distinct column of a dense
/// `rows x cols` matrix (`rows <= cols`). Returns the column per row.
///
/// Shortest augmenting path with vertex potentials, `O(rows^2 * cols)`.
pub fn hungarian(cost: &[Vec<f64>], cols: usize) -> Result<Vec<usize>, MatchError> {
    let rows = cost.len();
    if rows > cols {
        return Err(MatchError::Shape(format!("{rows} rows exceed {cols} columns")));
    }
    for (i, row) in cost.iter().enumerate() {
        if row.len() != cols {
            return Err(MatchError::Shape(format!("row {i} has {} columns", row.len())));
        }
        if let Some(j) = row.iter().position(|c| !c.is_finite()) {
            return Err(MatchError::NonFiniteCost { row: i, col: j });
        }
    }
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut visited = vec![false; cols + 1];
        loop {
            visited[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if visited[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if visited[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VertexSeq;

    pub(crate) fn targets(polys: &[VertexSeq], m: usize, n: usize) -> PaddedTargets {
        PaddedTargets::from_polygons(polys, None, m, n).unwrap()
    }

    /// Prediction equal to the targets, with perfect validity probabilities.
    pub(crate) fn perfect(t: &PaddedTargets) -> Prediction {
        Prediction::new(
            t.m,
            t.n,
            t.coords.clone(),
            t.labels.iter().map(|&l| l as f64).collect(),
        )
    }

    fn tri() -> VertexSeq {
        VertexSeq::from_xy(&[(0.2, 0.2), (0.6, 0.2), (0.3, 0.7)])
    }

    #[test]
    fn padded_row_costs_nothing() {
        let t = targets(&[tri()], 3, 4);
        let p = perfect(&t);
        assert_eq!(pair_cost(&t, 2, &p, 0, &CostWeights::default()).unwrap(), PairCost::default());
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let t = targets(&[tri()], 2, 4);
        let p = perfect(&t);
        assert_eq!(pair_cost(&t, 0, &p, 0, &CostWeights::default()).unwrap().total(), 0.0);
    }

    #[test]
    fn shifted_triangle_cost() {
        let t = targets(&[tri()], 1, 3);
        let mut p = perfect(&t);
        for c in &mut p.coords {
            c.x += 0.1;
        }
        let c = pair_cost(&t, 0, &p, 0, &CostWeights::default()).unwrap();
        assert!((c.total() - 1.5).abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn empty_scene_gives_identity() {
        let t = targets(&[], 4, 3);
        let p = Prediction::new(4, 3, vec![Point2::new(0.5, 0.5); 12], vec![0.3; 12]);
        let a = match_polygons(&t, &p, &CostWeights::default()).unwrap();
        assert_eq!(a.total, 0.0);
        assert_eq!(a.perm, vec![0, 1, 2, 3]);
    }

    #[test]
    fn non_finite_costs_rejected() {
        let cost = vec![vec![0.0, f64::NAN]];
        assert_eq!(hungarian(&cost, 2), Err(MatchError::NonFiniteCost { row: 0, col: 1 }));
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let t = targets(&[tri()], 2, 3);
        let p = Prediction::new(3, 3, vec![Point2::default(); 9], vec![0.0; 9]);
        assert!(matches!(match_polygons(&t, &p, &CostWeights::default()), Err(MatchError::Shape(_))));
    }

    #[test]
    fn hungarian_small_known_case() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        assert_eq!(hungarian(&cost, 3).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn mask_mode_prefers_overlapping_prediction() {
        let sq = VertexSeq::from_xy(&[(0.1, 0.1), (0.4, 0.1), (0.4, 0.4), (0.1, 0.4)]);
        let t = targets(&[sq.clone()], 2, 4);
        let far = sq.map(|p| Point2::new(p.x + 0.5, p.y + 0.5));
        let mut coords = far.0.clone();
        coords.extend(sq.0.iter().copied());
        let p = Prediction::new(2, 4, coords, vec![1.0; 8]);
        let w = CostWeights {
            mode: CostMode::Mask {
                resolution: 32,
                temperature: 0.01,
            },
            ..CostWeights::default()
        };
        let a = match_polygons(&t, &p, &w).unwrap();
        assert_eq!(a.perm[0], 1);
    }
}
