use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub similarity: f64,
    pub target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate of a verification run. A trial is accepted when its similarity is at
/// least the threshold. Thresholds are swept over every observed similarity and `+∞`; at the
/// first one where the false-reject rate reaches the false-accept rate the two curves are
/// linearly interpolated against the previous threshold to find the crossing.
pub fn compute_eer(trials: &[ScoredTrial]) -> Result<EerResult> {
    if trials.iter().any(|t| !t.similarity.is_finite()) {
        return Err(Error::invalid("similarities must be finite"));
    }
    let n_target = trials.iter().filter(|t| t.target).count();
    let n_nontarget = trials.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<ScoredTrial> = trials.to_vec();
    sorted.sort_by(|a, b| a.similarity.total_cmp(&b.similarity));

    // Operating points (threshold, far, frr), ascending in threshold.
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    let (mut rejected_targets, mut rejected_nontargets) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].similarity;
        points.push((
            t,
            (n_nontarget - rejected_nontargets) as f64 / n_nontarget as f64,
            rejected_targets as f64 / n_target as f64,
        ));
        while i < sorted.len() && sorted[i].similarity == t {
            if sorted[i].target {
                rejected_targets += 1;
            } else {
                rejected_nontargets += 1;
            }
            i += 1;
        }
    }
    points.push((f64::INFINITY, 0.0, 1.0));

    let k = points
        .iter()
        .position(|&(_, far, frr)| frr >= far)
        .expect("the +inf point has frr 1 >= far 0");
    let (t1, far1, frr1) = points[k];
    if k == 0 || frr1 == far1 {
        return Ok(EerResult {
            eer: far1,
            threshold: t1,
        });
    }
    let (t0, far0, frr0) = points[k - 1];
    let (d0, d1) = (far0 - frr0, far1 - frr1);
    let alpha = d0 / (d0 - d1);
    let threshold = if t1.is_finite() {
        t0 + alpha * (t1 - t0)
    } else {
        t0
    };
    Ok(EerResult {
        eer: far0 + alpha * (far1 - far0),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    use super::*;

    fn trials(targets: &[f64], nontargets: &[f64]) -> Vec<ScoredTrial> {
        targets
            .iter()
            .map(|&s| ScoredTrial { similarity: s, target: true })
            .chain(nontargets.iter().map(|&s| ScoredTrial { similarity: s, target: false }))
            .collect()
    }

    #[test]
    fn separated_scores() {
        let r = compute_eer(&trials(&[0.8, 0.9], &[0.1, 0.2, 0.3])).unwrap();
        assert_eq!(r.eer, 0.0);
        assert_eq!(r.threshold, 0.8);
    }

    #[test]
    fn four_point_case() {
        // every threshold in (0.6, 0.7] rejects one target and accepts one nontarget
        let r = compute_eer(&trials(&[0.9, 0.6], &[0.7, 0.2])).unwrap();
        assert_eq!(r.eer, 0.5);
        assert_eq!(r.threshold, 0.7);
    }

    #[test]
    fn interpolated_crossing() {
        // (far, frr) is (1/2, 1/3) at 0.6 and (0, 1/3) at 0.9; the lines meet a third of the way
        let r = compute_eer(&trials(&[0.5, 0.9, 0.95], &[0.1, 0.6])).unwrap();
        assert!((r.eer - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.threshold - 0.7).abs() < 1e-12);
        let inverted = compute_eer(&trials(&[0.1], &[0.9])).unwrap();
        assert_eq!(inverted.eer, 1.0);
    }

    #[test]
    fn single_class() {
        assert!(matches!(compute_eer(&trials(&[0.5], &[])), Err(Error::SingleClass)));
        assert!(matches!(compute_eer(&trials(&[], &[0.5])), Err(Error::SingleClass)));
        assert!(compute_eer(&trials(&[f64::NAN], &[0.5])).is_err());
    }

    #[test]
    fn coin_flip_labels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let t: Vec<ScoredTrial> = (0..10_000)
            .map(|_| ScoredTrial {
                similarity: rng.random::<f64>(),
                target: rng.random::<bool>(),
            })
            .collect();
        assert!((compute_eer(&t).unwrap().eer - 0.5).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn increasing_transform_invariant(
            scores in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..40),
        ) {
            let t: Vec<ScoredTrial> = scores.iter().map(|&(s, l)| ScoredTrial { similarity: s, target: l }).collect();
            let Ok(base) = compute_eer(&t) else { return Ok(()); };
            let moved: Vec<ScoredTrial> = t.iter().map(|x| ScoredTrial { similarity: x.similarity.exp() * 3.0 + 1.0, ..*x }).collect();
            prop_assert!((compute_eer(&moved).unwrap().eer - base.eer).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base.eer));
        }
    }
}
