//! Concentration scores and randomized outlier removal.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::linalg;
use crate::mechanisms::noise::{sample_laplace, NoiseSource};
use crate::rng::RngStream;

/// `(1/C) * #{(j, j') : ||x_j - x_j'|| <= tau}`, diagonal pairs included.
pub fn concentration_score(points: &[Vec<f64>], tau: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(invalid("concentration score of an empty point set"));
    }
    let counts = neighbour_counts(points, tau);
    Ok(counts.iter().sum::<usize>() as f64 / points.len() as f64)
}

/// For each point, the number of points (itself included) within `radius`.
pub fn neighbour_counts(points: &[Vec<f64>], radius: f64) -> Vec<usize> {
    let c = points.len();
    let r2 = radius * radius;
    let mut counts = vec![1usize; c];
    for j in 0..c {
        for k in (j + 1)..c {
            if linalg::dist_sq(&points[j], &points[k]) <= r2 {
                counts[j] += 1;
                counts[k] += 1;
            }
        }
    }
    counts
}

/// Inclusion probability for a point with neighbour count `h` out of `c`:
/// 0 below c/2, 1 from 2c/3 on, linear in between. Evaluated on integers so
/// the breakpoints are exact for every `c`.
pub fn inclusion_probability(h: usize, c: usize) -> f64 {
    if 2 * h < c {
        0.0
    } else if 3 * h >= 2 * c {
        1.0
    } else {
        // (h - c/2) / (c/6)
        (6 * h - 3 * c) as f64 / c as f64
    }
}

/// Outcome of the per-point inclusion step.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub scores: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub selected: Vec<usize>,
}

/// Score every point by its neighbours within `2 * tau` and keep it with
/// the corresponding inclusion probability. Uniform `j` is the `j`-th draw
/// of `rng`, so coupled runs see identical uniforms.
pub fn select_inliers(points: &[Vec<f64>], tau: f64, rng: &RngStream) -> Selection {
    let c = points.len();
    let scores = neighbour_counts(points, 2.0 * tau);
    let probabilities: Vec<f64> = scores.iter().map(|&h| inclusion_probability(h, c)).collect();
    let mut r = rng.rng();
    let selected = probabilities
        .iter()
        .enumerate()
        .filter_map(|(j, &p)| {
            let u: f64 = r.gen();
            (u < p).then_some(j)
        })
        .collect();
    Selection {
        scores,
        probabilities,
        selected,
    }
}

/// Noisy gate applied to the concentration score before outlier removal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreGate {
    pub threshold: f64,
    /// Laplace scale added to the raw score.
    pub noise_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub raw_score: f64,
    pub noisy_score: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Indices kept; empty when the gate failed.
    pub selected: Vec<usize>,
    pub per_point_scores: Vec<usize>,
    pub inclusion_probs: Vec<f64>,
}

/// Privately test concentration at radius `tau`, then, if the noisy score
/// clears the gate, remove outliers using neighbour counts at `2 * tau`.
pub fn filter_outliers(
    points: &[Vec<f64>],
    tau: f64,
    gate: ScoreGate,
    src: &mut NoiseSource,
    inclusion: &RngStream,
) -> Result<ConcentrationReport> {
    let raw_score = concentration_score(points, tau)?;
    let noisy_score = raw_score + sample_laplace(gate.noise_scale, src)?;
    let passed = noisy_score >= gate.threshold;
    let (selected, per_point_scores, inclusion_probs) = if passed {
        let s = select_inliers(points, tau, inclusion);
        (s.selected, s.scores, s.probabilities)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    Ok(ConcentrationReport {
        raw_score,
        noisy_score,
        threshold: gate.threshold,
        passed,
        selected,
        per_point_scores,
        inclusion_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gate(c: usize) -> ScoreGate {
        ScoreGate {
            threshold: 4.0 * c as f64 / 5.0,
            noise_scale: 1.0,
        }
    }

    #[test]
    fn identical_points_score_c() {
        let pts = vec![vec![1.0, 2.0]; 3];
        assert_eq!(concentration_score(&pts, 0.1).unwrap(), 3.0);
    }

    #[test]
    fn one_far_point_scores_five_thirds() {
        // pairs within tau: 3 diagonal + (0,1) + (1,0)
        let pts = vec![vec![0.0], vec![0.0], vec![5.0]];
        assert_eq!(concentration_score(&pts, 1.0).unwrap(), 5.0 / 3.0);
    }

    #[test]
    fn single_point_scores_one() {
        assert_eq!(concentration_score(&[vec![3.0]], 0.5).unwrap(), 1.0);
        assert!(concentration_score(&[], 0.5).is_err());
    }

    #[test]
    fn inclusion_table() {
        assert_eq!(inclusion_probability(5, 12), 0.0);
        assert_eq!(inclusion_probability(7, 12), 0.5);
        assert_eq!(inclusion_probability(8, 12), 1.0);
        assert_eq!(inclusion_probability(6, 12), 0.0);
        assert_eq!(inclusion_probability(1, 1), 1.0);
    }

    #[test]
    fn concentrated_points_all_selected() {
        let pts: Vec<Vec<f64>> = (0..10).map(|j| vec![0.01 * j as f64, 0.0]).collect();
        let rep = filter_outliers(&pts, 0.1, gate(10), &mut NoiseSource::Disabled, &RngStream::new(4))
            .unwrap();
        assert!(rep.passed);
        assert_eq!(rep.selected, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn isolated_points_are_dropped() {
        // 8 points in a tight cluster, 4 isolated far from each other and the cluster
        let mut pts: Vec<Vec<f64>> = (0..8).map(|j| vec![0.001 * j as f64, 0.0]).collect();
        for k in 0..4 {
            pts.push(vec![100.0 * (k + 1) as f64, 50.0]);
        }
        let s = select_inliers(&pts, 1.0, &RngStream::new(9));
        assert_eq!(&s.scores[..8], &[8; 8]);
        assert_eq!(&s.scores[8..], &[1; 4]);
        assert_eq!(s.selected, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn single_point_is_kept() {
        let rep = filter_outliers(&[vec![0.0]], 1.0, gate(1), &mut NoiseSource::Disabled, &RngStream::new(0))
            .unwrap();
        assert_eq!(rep.selected, vec![0]);
    }

    #[test]
    fn failed_gate_selects_nothing() {
        let pts = vec![vec![0.0], vec![10.0], vec![20.0], vec![30.0], vec![40.0]];
        let rep = filter_outliers(&pts, 1.0, gate(5), &mut NoiseSource::Disabled, &RngStream::new(0))
            .unwrap();
        assert!(!rep.passed);
        assert!(rep.selected.is_empty());
    }

    proptest! {
        #[test]
        fn score_is_permutation_and_translation_invariant(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..12),
            shift in prop::collection::vec(-10.0f64..10.0, 2),
            tau in 0.1f64..4.0,
            rot in 0usize..12,
        ) {
            let base = concentration_score(&pts, tau).unwrap();
            let mut permuted = pts.clone();
            let k = rot % permuted.len();
            permuted.rotate_left(k);
            permuted.reverse();
            prop_assert_eq!(concentration_score(&permuted, tau).unwrap(), base);
            // translation by a dyadic-free shift may move pairs sitting exactly on tau;
            // compare counts with a hair of slack on the radius
            let moved: Vec<Vec<f64>> = pts.iter().map(|p| linalg::add(p, &shift)).collect();
            let lo = concentration_score(&moved, tau * (1.0 - 1e-9)).unwrap();
            let hi = concentration_score(&moved, tau * (1.0 + 1e-9)).unwrap();
            prop_assert!(lo <= base && base <= hi);
            prop_assert!((1.0..=pts.len() as f64).contains(&base));
        }

        #[test]
        fn inclusion_is_monotone(c in 1usize..60) {
            let mut prev = 0.0;
            for h in 1..=c {
                let p = inclusion_probability(h, c);
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!(p >= prev);
                prev = p;
            }
            prop_assert_eq!(inclusion_probability(c, c), 1.0);
        }
    }

    #[test]
    fn inclusion_is_continuous_at_breakpoints() {
        // along the real extension, values at c/2 and 2c/3 match the neighbouring pieces
        let c = 12;
        let linear = |h: f64| (h - c as f64 / 2.0) / (c as f64 / 6.0);
        assert_eq!(linear(6.0), 0.0);
        assert_eq!(linear(8.0), 1.0);
        assert_eq!(inclusion_probability(6, c), 0.0);
        assert_eq!(inclusion_probability(8, c), 1.0);
    }
}
