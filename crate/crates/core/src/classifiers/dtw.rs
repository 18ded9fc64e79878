//! Dynamic time warping and the k-nearest-neighbour classifier built on it.

use crate::error::{Error, Result};
use crate::gestures::GestureClass;
use crate::trajectory::{NormTrajectory, Point};

use super::Prediction;

/// Full-grid DTW cost with Euclidean local cost:
/// `D[i,j] = |a_i − b_j| + min(D[i−1,j], D[i,j−1], D[i−1,j−1])`.
pub fn dtw_distance(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("DTW needs two non-empty sequences"));
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, pa) in a.iter().enumerate() {
        for (j, pb) in b.iter().enumerate() {
            let cost = pa.distance(pb);
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Stored training exemplars for k-NN voting.
#[derive(Clone, Debug, PartialEq)]
pub struct DtwKnn {
    pub k: usize,
    pub exemplars: Vec<(GestureClass, Vec<Point>)>,
}

impl DtwKnn {
    pub fn new(k: usize) -> Self {
        DtwKnn {
            k,
            exemplars: Vec::new(),
        }
    }

    pub fn add(&mut self, class: GestureClass, traj: &NormTrajectory) {
        let pts = traj.points().iter().map(|p| Point::new(p.x, p.y)).collect();
        self.exemplars.push((class, pts));
    }

    /// Vote fractions among the `k` nearest exemplars. Class ties go to the
    /// smaller mean neighbour distance, then the lower class code.
    pub fn predict(&self, query: &[Point]) -> Result<Prediction> {
        if self.exemplars.is_empty() {
            return Err(Error::Model("DTW model holds no exemplars".into()));
        }
        if self.exemplars.len() < self.k {
            return Err(Error::Model(format!(
                "DTW model holds {} exemplars, fewer than k = {}",
                self.exemplars.len(),
                self.k
            )));
        }
        let mut dists = self
            .exemplars
            .iter()
            .enumerate()
            .map(|(i, (_, ex))| Ok((dtw_distance(query, ex)?, i)))
            .collect::<Result<Vec<_>>>()?;
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut votes = [0usize; GestureClass::COUNT];
        let mut dist_sum = [0.0f64; GestureClass::COUNT];
        for &(d, i) in &dists[..self.k] {
            let c = self.exemplars[i].0.code();
            votes[c] += 1;
            dist_sum[c] += d;
        }
        let best = (0..GestureClass::COUNT)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then((dist_sum[a] / votes[a] as f64).total_cmp(&(dist_sum[b] / votes[b] as f64)))
                    .then(a.cmp(&b))
            })
            .expect("k >= 1 neighbours vote");
        let mut probs = [0.0; GestureClass::COUNT];
        for c in 0..GestureClass::COUNT {
            probs[c] = votes[c] as f64 / self.k as f64;
        }
        Ok(Prediction::with_class(
            probs,
            GestureClass::from_code(best).expect("valid code"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xy: &[(f64, f64)]) -> Vec<Point> {
        xy.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn single_points() {
        assert_eq!(dtw_distance(&pts(&[(0.0, 0.0)]), &pts(&[(3.0, 4.0)])).unwrap(), 5.0);
    }

    #[test]
    fn repeated_point_alignment_is_free() {
        let a = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let b = pts(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(dtw_distance(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn identity_and_symmetry() {
        let a = pts(&[(0.1, 0.9), (0.4, 0.2), (0.8, 0.5), (0.3, 0.3)]);
        let b = pts(&[(0.0, 0.0), (0.5, 0.7), (0.9, 0.1)]);
        assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(dtw_distance(&a, &b).unwrap(), dtw_distance(&b, &a).unwrap());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            dtw_distance(&[], &pts(&[(0.0, 0.0)])),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn knn_with(k: usize, classes: &[(GestureClass, f64)]) -> DtwKnn {
        DtwKnn {
            k,
            exemplars: classes
                .iter()
                .map(|&(c, off)| (c, pts(&[(off, 0.0), (off, 1.0)])))
                .collect(),
        }
    }

    #[test]
    fn exact_match_with_k_one() {
        let m = knn_with(1, &[(GestureClass::Star, 0.0), (GestureClass::Caret, 0.5)]);
        let p = m.predict(&pts(&[(0.5, 0.0), (0.5, 1.0)])).unwrap();
        assert_eq!(p.class, GestureClass::Caret);
        assert_eq!(p.confidence, 1.0);
    }

    #[test]
    fn vote_fraction_confidence() {
        use GestureClass::*;
        let m = knn_with(
            5,
            &[
                (SwipeLeft, 0.0),
                (SwipeLeft, 0.01),
                (SwipeLeft, 0.02),
                (Cross, 0.005),
                (Cross, 0.015),
                (Circle, 0.9),
            ],
        );
        let p = m.predict(&pts(&[(0.0, 0.0), (0.0, 1.0)])).unwrap();
        assert_eq!(p.class, SwipeLeft);
        assert!((p.confidence - 0.6).abs() < 1e-15);
        assert!((p.probs[Cross.code()] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn tied_votes_go_to_closer_class() {
        use GestureClass::*;
        let m = knn_with(4, &[(Star, 0.1), (Star, 0.2), (Caret, 0.05), (Caret, 0.3)]);
        // Star mean 0.15·2, Caret mean 0.175·2
        let p = m.predict(&pts(&[(0.0, 0.0), (0.0, 1.0)])).unwrap();
        assert_eq!(p.class, Star);
    }

    #[test]
    fn empty_or_short_store_is_model_error() {
        let m = DtwKnn::new(3);
        assert!(matches!(m.predict(&pts(&[(0.0, 0.0)])), Err(Error::Model(_))));
        let m = knn_with(3, &[(GestureClass::Star, 0.0)]);
        assert!(matches!(m.predict(&pts(&[(0.0, 0.0)])), Err(Error::Model(_))));
    }
}
