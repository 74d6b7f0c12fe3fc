//! Discrete Fréchet distance between sampled planar trajectories.

use crate::error::{Error, Result};
use crate::geometry::pose::Trajectory;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Discrete Fréchet ("coupling") distance over two point sequences.
///
/// Row-by-row dynamic program with O(m) memory.
pub fn discrete_frechet_points(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument(
            "discrete Fréchet distance needs non-empty inputs".into(),
        ));
    }
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];

    prev[0] = dist(a[0], b[0]);
    for j in 1..m {
        prev[j] = prev[j - 1].max(dist(a[0], b[j]));
    }
    for ai in a.iter().skip(1) {
        cur[0] = prev[0].max(dist(*ai, b[0]));
        for j in 1..m {
            let reach = prev[j].min(prev[j - 1]).min(cur[j - 1]);
            cur[j] = reach.max(dist(*ai, b[j]));
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Discrete Fréchet distance over the (x, y) projection of two trajectories.
pub fn discrete_frechet(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    discrete_frechet_points(&a.points(), &b.points())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parallel_translate() {
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[0.0, 1.0], [1.0, 1.0]];
        assert_eq!(discrete_frechet_points(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn identical_is_zero() {
        let a = [[0.0, 0.0], [1.0, 0.5], [2.0, -1.0]];
        assert_eq!(discrete_frechet_points(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(
            discrete_frechet_points(&[], &[[0.0, 0.0]]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn single_points() {
        let d = discrete_frechet_points(&[[0.0, 0.0]], &[[3.0, 4.0], [0.0, 0.0]]).unwrap();
        assert_eq!(d, 5.0);
    }

    fn poly() -> impl Strategy<Value = Vec<[f64; 2]>> {
        proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..12)
            .prop_map(|v| v.into_iter().map(|(x, y)| [x, y]).collect())
    }

    proptest! {
        #[test]
        fn symmetric(a in poly(), b in poly()) {
            prop_assert_eq!(
                discrete_frechet_points(&a, &b).unwrap(),
                discrete_frechet_points(&b, &a).unwrap()
            );
        }

        #[test]
        fn translation_invariant(a in poly(), b in poly(), dx in -5.0..5.0f64, dy in -5.0..5.0f64) {
            let shift = |v: &Vec<[f64; 2]>| v.iter().map(|p| [p[0] + dx, p[1] + dy]).collect::<Vec<_>>();
            let d0 = discrete_frechet_points(&a, &b).unwrap();
            let d1 = discrete_frechet_points(&shift(&a), &shift(&b)).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-9);
        }
    }
}
