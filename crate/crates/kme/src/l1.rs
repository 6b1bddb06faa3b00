//! Euclidean projection onto the L1 ball, shared by both release paths.

use nalgebra::DVector;

/// Projects `v` onto `{u : |u|_1 <= radius}` (sort-based algorithm,
/// O(M log M)).  Feasible inputs are returned unchanged.
pub(crate) fn project_l1(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    debug_assert!(radius >= 0.0);
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.clone();
    }
    // Project |v| onto the simplex of radius `radius`, then restore signs.
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - radius) / (i as f64 + 1.0);
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.map(|x| {
        let shrunk = (x.abs() - theta).max(0.0);
        if x < 0.0 {
            -shrunk
        } else {
            shrunk
        }
    })
}
