//! Box-level grounding metrics.

use crate::model::Aabb;

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`),
/// O(rows^2 * cols) shortest augmenting paths with potentials.
/// Returns the column chosen for each row.
pub fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows <= cols");
    assert!(cost.iter().all(|r| r.len() == m), "ragged cost matrix");

    const INF: i64 = i64::MAX / 4;
    // 1-based with a virtual column 0
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Largest number of one-to-one (pred, gt) pairs with IoU >= `thr`.
pub fn max_matched_pairs(preds: &[Aabb], gts: &[Aabb], thr: f64) -> usize {
    if preds.is_empty() || gts.is_empty() {
        return 0;
    }
    let ok = |p: &Aabb, g: &Aabb| p.iou(g) >= thr;
    // rows must be the smaller side
    let (cost, transposed): (Vec<Vec<i64>>, bool) = if preds.len() <= gts.len() {
        (preds.iter().map(|p| gts.iter().map(|g| -(ok(p, g) as i64)).collect()).collect(), false)
    } else {
        (gts.iter().map(|g| preds.iter().map(|p| -(ok(p, g) as i64)).collect()).collect(), true)
    };
    let assignment = min_cost_assignment(&cost);
    assignment
        .iter()
        .enumerate()
        .filter(|&(r, &c)| {
            let (p, g) = if transposed { (c, r) } else { (r, c) };
            ok(&preds[p], &gts[g])
        })
        .count()
}

/// Set F1 for one instance. An empty ground-truth set scores 1 only for an
/// empty prediction.
pub fn instance_f1(preds: &[Aabb], gts: &[Aabb], thr: f64) -> f64 {
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let tp = max_matched_pairs(preds, gts, thr);
    let fp = preds.len() - tp;
    let fn_ = gts.len() - tp;
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / denom as f64
}

/// Single-box hit: exactly one prediction and one target with IoU strictly above `thr`.
pub fn single_hit(preds: &[Aabb], gts: &[Aabb], thr: f64) -> bool {
    match (preds, gts) {
        ([p], [g]) => p.iou(g) > thr,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(x: f64) -> Aabb {
        Aabb::new([x, 0.0, 0.0], [x + 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn assignment_small() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = min_cost_assignment(&cost);
        let total: i64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5);
        let rect = vec![vec![10, 1, 10, 10], vec![1, 10, 10, 10]];
        assert_eq!(min_cost_assignment(&rect), vec![1, 0]);
    }

    #[test]
    fn greedy_would_undercount() {
        // pred 0 overlaps both targets; pred 1 only target 0.
        let gts = [cube(0.0), cube(0.6)];
        let preds = [cube(0.3), cube(0.0)];
        assert_eq!(max_matched_pairs(&preds, &gts, 0.25), 2);
    }

    #[test]
    fn f1_conventions() {
        assert_eq!(instance_f1(&[], &[], 0.5), 1.0);
        assert_eq!(instance_f1(&[cube(0.0)], &[], 0.5), 0.0);
        assert_eq!(instance_f1(&[], &[cube(0.0)], 0.5), 0.0);
        assert_eq!(instance_f1(&[cube(0.0)], &[cube(0.0)], 0.5), 1.0);
        // 2 targets, 3 predictions, one matchable pair
        let f = instance_f1(&[cube(0.0), cube(10.0), cube(20.0)], &[cube(0.0), cube(5.0)], 0.5);
        assert!((f - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_hit_is_strict() {
        let g = cube(0.0);
        // IoU exactly 1/3
        let p = Aabb::new([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]).unwrap();
        assert!(single_hit(&[p], &[g], 0.25));
        assert!(!single_hit(&[p], &[g], 0.5));
        assert!(!single_hit(&[p, p], &[g], 0.25));
    }
}
