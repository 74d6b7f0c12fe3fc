//! Mann-Whitney U and Cohen's d.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest combined sample size for which the exact null distribution is
/// enumerated.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs with x > y plus half the ties, so
    /// `U = 0` when every x lies below every y.
    pub u: f64,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut k = 0;
    while k < order.len() {
        let mut e = k;
        while e + 1 < order.len() && pooled[order[e + 1]] == pooled[order[k]] {
            e += 1;
        }
        let r = (k + e) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=e] {
            ranks[idx] = r;
        }
        k = e + 1;
    }
    ranks
}

/// Rank sums of every size-`n1` subset of `ranks`.
fn subset_sums(ranks: &[f64], n1: usize) -> Vec<f64> {
    fn go(ranks: &[f64], start: usize, left: usize, acc: f64, out: &mut Vec<f64>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for i in start..=ranks.len() - left {
            go(ranks, i + 1, left - 1, acc + ranks[i], out);
        }
    }
    let mut out = Vec::new();
    go(ranks, 0, n1, 0.0, &mut out);
    out
}

pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("Mann-Whitney U needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite sample value".into()));
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let base = (n1 * (n1 + 1)) as f64 / 2.0;
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - base;
    let mean = (n1 * n2) as f64 / 2.0;
    let n = n1 + n2;

    if n <= EXACT_LIMIT {
        let sums = subset_sums(&ranks, n1);
        let obs = (u - mean).abs();
        let hits = sums
            .iter()
            .filter(|s| ((*s - base) - mean).abs() >= obs - 1e-9)
            .count();
        return Ok(MannWhitney {
            u,
            p_two_sided: (hits as f64 / sums.len() as f64).min(1.0),
            exact: true,
        });
    }

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut k = 0;
    while k < sorted.len() {
        let mut e = k;
        while e + 1 < sorted.len() && sorted[e + 1] == sorted[k] {
            e += 1;
        }
        let t = (e - k + 1) as f64;
        tie_term += t * t * t - t;
        k = e + 1;
    }
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney {
            u,
            p_two_sided: 1.0,
            exact: false,
        });
    }
    // Continuity-corrected normal approximation.
    let z = (((u - mean).abs() - 0.5).max(0.0)) / var.sqrt();
    let normal = Normal::standard();
    Ok(MannWhitney {
        u,
        p_two_sided: (2.0 * normal.sf(z)).min(1.0),
        exact: false,
    })
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let ss = v.iter().map(|a| (a - m).powi(2)).sum::<f64>();
    (m, ss / (v.len() - 1) as f64)
}

/// `(mean_x − mean_y) / pooled_std` with the unbiased pooled variance.
pub fn cohens_d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Argument("Cohen's d needs at least two values per sample".into()));
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let pooled = (((n1 - 1.0) * vx + (n2 - 1.0) * vy) / (n1 + n2 - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(Error::UndefinedEffect);
    }
    Ok((mx - my) / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p_two_sided - 0.1).abs() < 1e-12);
        let flipped = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(flipped.u, 9.0);
    }

    #[test]
    fn identical_samples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert_eq!(r.u, 8.0);
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(cohens_d(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = (0..30).map(|v| f64::from(v) + 0.5).collect();
        let r = mann_whitney_u(&x, &y).unwrap();
        assert!(!r.exact);
        assert!(r.p_two_sided > 0.5);
        let far: Vec<f64> = (100..130).map(f64::from).collect();
        assert!(mann_whitney_u(&x, &far).unwrap().p_two_sided < 1e-9);
    }

    #[test]
    fn cohens_d_by_hand() {
        // Means 2 and 5, both sample variances 1.
        let d = cohens_d(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((d + 3.0).abs() < 1e-12);
        assert!(matches!(cohens_d(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::UndefinedEffect)));
        assert!(cohens_d(&[1.0], &[2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn p_invariant_under_monotone_transform(
            x in prop::collection::vec(-5.0..5.0f64, 1..8),
            y in prop::collection::vec(-5.0..5.0f64, 1..8),
        ) {
            let a = mann_whitney_u(&x, &y).unwrap();
            let f = |v: &f64| v.exp() * 3.0 + 1.0;
            let tx: Vec<f64> = x.iter().map(f).collect();
            let ty: Vec<f64> = y.iter().map(f).collect();
            let b = mann_whitney_u(&tx, &ty).unwrap();
            prop_assert_eq!(a.u, b.u);
            prop_assert!((a.p_two_sided - b.p_two_sided).abs() < 1e-12);
        }

        #[test]
        fn d_antisymmetric_and_affine_invariant(
            x in prop::collection::vec(-10.0..10.0f64, 2..12),
            y in prop::collection::vec(-10.0..10.0f64, 2..12),
            a in 0.1..10.0f64,
            b in -50.0..50.0f64,
        ) {
            if let (Ok(d), Ok(r)) = (cohens_d(&x, &y), cohens_d(&y, &x)) {
                prop_assert!((d + r).abs() < 1e-9);
                let sx: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let sy: Vec<f64> = y.iter().map(|v| a * v + b).collect();
                prop_assert!((cohens_d(&sx, &sy).unwrap() - d).abs() < 1e-6 * (1.0 + d.abs()));
            }
        }
    }
}
