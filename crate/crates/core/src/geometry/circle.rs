use crate::error::{Error, Result};

/// Relative scatter eigenvalue below which a point set counts as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// Root-mean-square of radial residuals.
    pub residual_rms: f64,
}

/// Algebraic (Kåsa) least-squares circle fit.
///
/// Minimizes Σ (x² + y² + D·x + E·y + F)² after centering and scaling the
/// points, which keeps the 3×3 normal equations well conditioned.
pub fn fit_circle(points: &[[f64; 2]]) -> Result<CircleFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "circle fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let scale = (points
        .iter()
        .map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate("points coincide".into()));
    }

    let pts: Vec<[f64; 2]> = points
        .iter()
        .map(|p| [(p[0] - mx) / scale, (p[1] - my) / scale])
        .collect();

    // Collinearity: smallest eigenvalue of the normalized scatter matrix.
    let sxx = pts.iter().map(|p| p[0] * p[0]).sum::<f64>() / n;
    let syy = pts.iter().map(|p| p[1] * p[1]).sum::<f64>() / n;
    let sxy = pts.iter().map(|p| p[0] * p[1]).sum::<f64>() / n;
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
    let lambda_min = tr / 2.0 - disc;
    if lambda_min / tr < COLLINEAR_TOLERANCE {
        return Err(Error::Degenerate("points are collinear".into()));
    }

    // Normal equations for [D, E, F].
    let mut a = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for p in &pts {
        let row = [p[0], p[1], 1.0];
        let z = -(p[0] * p[0] + p[1] * p[1]);
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * z;
        }
    }
    let sol = solve3(a, rhs).ok_or_else(|| Error::Degenerate("singular normal equations".into()))?;
    let cx = -sol[0] / 2.0;
    let cy = -sol[1] / 2.0;
    let r2 = cx * cx + cy * cy - sol[2];
    if !(r2 > 0.0) {
        return Err(Error::Degenerate("no real circle fits the points".into()));
    }
    let radius_n = r2.sqrt();

    let center = [mx + cx * scale, my + cy * scale];
    let radius = radius_n * scale;
    let residual_rms = (points
        .iter()
        .map(|p| {
            let d = (p[0] - center[0]).hypot(p[1] - center[1]) - radius;
            d * d
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CircleFit {
        center,
        radius,
        residual_rms,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_circle() {
        let pts: Vec<[f64; 2]> = (0..16)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 16.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let fit = fit_circle(&pts).unwrap();
        assert!((fit.radius - 1.0).abs() < 1e-9);
        assert!(fit.center[0].abs() < 1e-9 && fit.center[1].abs() < 1e-9);
    }

    #[test]
    fn three_point_circumcircle() {
        let fit = fit_circle(&[[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]]).unwrap();
        assert!((fit.center[0] - 1.0).abs() < 1e-12);
        assert!(fit.center[1].abs() < 1e-12);
        assert!((fit.radius - 1.0).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_circle(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            fit_circle(&[[0.0, 0.0], [1.0, 1.0]]),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn recovers_radius(r in 0.1..10.0f64, cx in -20.0..20.0f64, cy in -20.0..20.0f64,
                           start in 0.0..6.28f64, span in 0.5..6.28f64) {
            let pts: Vec<[f64; 2]> = (0..40)
                .map(|i| {
                    let a = start + span * i as f64 / 39.0;
                    [cx + r * a.cos(), cy + r * a.sin()]
                })
                .collect();
            let fit = fit_circle(&pts).unwrap();
            prop_assert!((fit.radius - r).abs() < 1e-9);
        }
    }
}
