//! Greedy assignment of recovered atoms to ground-truth atoms.

use crate::measure::WeightedMeasure;

/// One recovered atom assigned to a ground-truth atom. Errors are absolute
/// differences; `position_error` is the Euclidean distance in voxels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    pub truth_index: usize,
    pub estimate_index: usize,
    pub position_error: f64,
    pub sigma_error: f64,
    pub shape_error: f64,
    pub weight_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchReport {
    /// Sorted by truth index.
    pub pairs: Vec<MatchedPair>,
    /// Ground-truth atoms with no estimate within the radius.
    pub missed: Vec<usize>,
    /// Estimated atoms left unassigned.
    pub spurious: Vec<usize>,
}

impl MatchReport {
    pub fn max_position_error(&self) -> Option<f64> {
        self.pairs.iter().map(|p| p.position_error).reduce(f64::max)
    }

    fn mean(&self, f: impl Fn(&MatchedPair) -> f64) -> Option<f64> {
        if self.pairs.is_empty() {
            None
        } else {
            Some(self.pairs.iter().map(f).sum::<f64>() / self.pairs.len() as f64)
        }
    }

    pub fn mean_position_error(&self) -> Option<f64> {
        self.mean(|p| p.position_error)
    }

    pub fn mean_sigma_error(&self) -> Option<f64> {
        self.mean(|p| p.sigma_error)
    }

    pub fn mean_shape_error(&self) -> Option<f64> {
        self.mean(|p| p.shape_error)
    }

    pub fn mean_weight_error(&self) -> Option<f64> {
        self.mean(|p| p.weight_error)
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Repeatedly pairs the closest unassigned (truth, estimate) couple whose
/// distance is at most `radius`. Ties break on truth index, then estimate index.
pub fn match_atoms(estimated: &WeightedMeasure, truth: &WeightedMeasure, radius: f64) -> MatchReport {
    let mut candidates = Vec::new();
    for (ti, t) in truth.atoms().iter().enumerate() {
        for (ei, e) in estimated.atoms().iter().enumerate() {
            let d = distance(&t.theta.position, &e.theta.position);
            if d <= radius {
                candidates.push((d, ti, ei));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut truth_used = vec![false; truth.len()];
    let mut est_used = vec![false; estimated.len()];
    let mut pairs = Vec::new();
    for (d, ti, ei) in candidates {
        if truth_used[ti] || est_used[ei] {
            continue;
        }
        truth_used[ti] = true;
        est_used[ei] = true;
        let (t, e) = (truth.atoms()[ti], estimated.atoms()[ei]);
        pairs.push(MatchedPair {
            truth_index: ti,
            estimate_index: ei,
            position_error: d,
            sigma_error: (e.theta.sigma - t.theta.sigma).abs(),
            shape_error: (e.theta.shape - t.theta.shape).abs(),
            weight_error: (e.weight - t.weight).abs(),
        });
    }
    pairs.sort_by_key(|p| p.truth_index);
    MatchReport {
        pairs,
        missed: (0..truth.len()).filter(|&i| !truth_used[i]).collect(),
        spurious: (0..estimated.len()).filter(|&i| !est_used[i]).collect(),
    }
}
