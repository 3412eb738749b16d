use super::DiagError;

fn check_lengths(rhat: &[f64], a: &[f64], b: &[f64]) -> Result<(), DiagError> {
    if rhat.is_empty() {
        return Err(DiagError::Empty);
    }
    if rhat.len() != a.len() {
        return Err(DiagError::LengthMismatch(rhat.len(), a.len()));
    }
    if rhat.len() != b.len() {
        return Err(DiagError::LengthMismatch(rhat.len(), b.len()));
    }
    if b.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(DiagError::Invalid("every b must be positive".into()));
    }
    Ok(())
}

/// Optimal-over-homogeneous gain on the two-layer toy:
/// `(1 + β)(1 + α²/β) / (1 + α)²`.
pub fn kappa_layer(alpha: f64, beta: f64) -> f64 {
    (1.0 + beta) * (1.0 + alpha * alpha / beta) / (1.0 + alpha).powi(2)
}

/// `Φ(r̂) = (Σ r̂_ℓ a_ℓ)² / Σ b_ℓ r̂_ℓ²`.
pub fn phi(rhat: &[f64], a: &[f64], b: &[f64]) -> Result<f64, DiagError> {
    check_lengths(rhat, a, b)?;
    let num: f64 = rhat.iter().zip(a).map(|(r, a)| r * a).sum();
    let den: f64 = rhat.iter().zip(b).map(|(r, b)| b * r * r).sum();
    if den == 0.0 {
        return Err(DiagError::ZeroDenominator);
    }
    Ok(num * num / den)
}

/// `Φ(r̂) / Φ(1)`.
pub fn kappa_eff(rhat: &[f64], a: &[f64], b: &[f64]) -> Result<f64, DiagError> {
    let base = phi(&vec![1.0; a.len()], a, b)?;
    if base == 0.0 {
        return Err(DiagError::ZeroDenominator);
    }
    Ok(phi(rhat, a, b)? / base)
}

fn cos2(u: &[f64], v: &[f64]) -> Result<f64, DiagError> {
    let uv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let uu: f64 = u.iter().map(|a| a * a).sum();
    let vv: f64 = v.iter().map(|a| a * a).sum();
    if uu == 0.0 || vv == 0.0 {
        return Err(DiagError::ZeroDenominator);
    }
    Ok(uv * uv / (uu * vv))
}

/// `cos²∠(x, y) / cos²∠(x, √b)` with `x = a/√b`, `y = r̂√b`.
pub fn kappa_eff_geometric(rhat: &[f64], a: &[f64], b: &[f64]) -> Result<f64, DiagError> {
    check_lengths(rhat, a, b)?;
    let sqrt_b: Vec<f64> = b.iter().map(|v| v.sqrt()).collect();
    let x: Vec<f64> = a.iter().zip(&sqrt_b).map(|(a, s)| a / s).collect();
    let y: Vec<f64> = rhat.iter().zip(&sqrt_b).map(|(r, s)| r * s).collect();
    let base = cos2(&x, &sqrt_b)?;
    if base == 0.0 {
        return Err(DiagError::ZeroDenominator);
    }
    Ok(cos2(&x, &y)? / base)
}

/// Maximiser `r̂_ℓ = a_ℓ / b_ℓ` (up to scale).
pub fn optimal_ratios(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(a, b)| a / b).collect()
}

/// Lower bound `1 + ρ² ν_r (1 + ν_√b) / (1 + ν_√b/ρ²) − δ` on the realised gain.
pub fn kappa_bound(rho: f64, nu_r: f64, nu_sqrtb: f64, delta: f64) -> f64 {
    if rho == 0.0 {
        return 1.0 - delta;
    }
    let r2 = rho * rho;
    1.0 + r2 * nu_r * (1.0 + nu_sqrtb) / (1.0 + nu_sqrtb / r2) - delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaStats {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub nu_r: f64,
    pub nu_sqrtb: f64,
    pub rho: f64,
    /// False when either `x` or `y` is constant, in which case `rho = 0`.
    pub rho_defined: bool,
}

impl KappaStats {
    /// Positive cross-layer heterogeneity of `y`.
    pub fn heterogeneous(&self) -> bool {
        self.nu_r > 0.0
    }

    /// Positive correlation between `y` and `x`.
    pub fn aligned(&self) -> bool {
        self.rho_defined && self.rho > 0.0
    }

    pub fn bound(&self, delta: f64) -> f64 {
        kappa_bound(self.rho.max(0.0), self.nu_r, self.nu_sqrtb, delta)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn relative_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    if m == 0.0 {
        return 0.0;
    }
    pop_var(v) / (m * m)
}

/// Cross-layer statistics with population normalisation.
pub fn hetero_stats(rhat: &[f64], a: &[f64], b: &[f64]) -> Result<KappaStats, DiagError> {
    check_lengths(rhat, a, b)?;
    if rhat.len() < 2 {
        return Err(DiagError::Invalid("need at least two layers".into()));
    }
    let sqrt_b: Vec<f64> = b.iter().map(|v| v.sqrt()).collect();
    let x: Vec<f64> = a.iter().zip(&sqrt_b).map(|(a, s)| a / s).collect();
    let y: Vec<f64> = rhat.iter().zip(&sqrt_b).map(|(r, s)| r * s).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let (vx, vy) = (pop_var(&x), pop_var(&y));
    let cov = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / x.len() as f64;
    let rho_defined = vx > 0.0 && vy > 0.0;
    let rho = if rho_defined {
        (cov / (vx * vy).sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(KappaStats {
        nu_r: relative_variance(&y),
        nu_sqrtb: relative_variance(&sqrt_b),
        rho,
        rho_defined,
        a: a.to_vec(),
        b: b.to_vec(),
        x,
        y,
    })
}

/// Grid maximisation of `Φ` over `r̂ ∈ [0.01, 10]^h` on a log-spaced grid
/// with `resolution` points per axis.
pub fn brute_force_phi_max(
    a: &[f64],
    b: &[f64],
    resolution: usize,
) -> Result<(Vec<f64>, f64), DiagError> {
    let h = a.len();
    if !(2..=4).contains(&h) {
        return Err(DiagError::Invalid(format!(
            "grid search needs 2 to 4 layers, got {h}"
        )));
    }
    if resolution < 2 || (resolution as f64).powi(h as i32) > 1e8 {
        return Err(DiagError::Invalid(format!(
            "unsupported resolution {resolution}"
        )));
    }
    check_lengths(&vec![1.0; h], a, b)?;
    let (lo, hi) = (0.01f64.ln(), 10f64.ln());
    let axis: Vec<f64> = (0..resolution)
        .map(|i| (lo + (hi - lo) * i as f64 / (resolution - 1) as f64).exp())
        .collect();
    let mut idx = vec![0usize; h];
    let mut r = vec![0.0; h];
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    loop {
        for (ri, &i) in r.iter_mut().zip(&idx) {
            *ri = axis[i];
        }
        let v = phi(&r, a, b)?;
        if v > best.1 {
            best = (r.clone(), v);
        }
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < resolution {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == h {
                return Ok(best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // independent Cauchy–Schwarz oracle: Φ_opt = Σ a²/b
    fn phi_opt(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(a, b)| a * a / b).sum()
    }

    #[test]
    fn kappa_layer_cells() {
        assert!((kappa_layer(0.1, 1.0) - 1.669_421_487_603_305_7).abs() < 1e-12);
        assert!((kappa_layer(1.0, 10.0) - 3.025).abs() < 1e-12);
        assert!((kappa_layer(0.1, 10.0) - 9.1).abs() < 1e-12);
        assert_eq!(kappa_layer(1.0, 1.0), 1.0);
    }

    #[test]
    fn phi_cases() {
        let a = [1.0, 0.1];
        let b = [1.0, 10.0];
        let muon = phi(&[1.0, 1.0], &a, &b).unwrap();
        assert!((muon - 1.21 / 11.0).abs() < 1e-15);
        assert!((phi(&[7.0, 7.0], &a, &b).unwrap() - muon).abs() < 1e-15);
        let opt = phi(&optimal_ratios(&a, &b), &a, &b).unwrap();
        assert!((opt - phi_opt(&a, &b)).abs() < 1e-15);
        assert!((kappa_eff(&optimal_ratios(&a, &b), &a, &b).unwrap() - 9.1).abs() < 1e-12);
        assert_eq!(phi(&[0.0, 0.0], &a, &b), Err(DiagError::ZeroDenominator));
        assert!(phi(&[1.0], &a, &b).is_err());
    }

    #[test]
    fn kappa_bound_cases() {
        assert!((kappa_bound(0.5, 0.3, 0.5, 0.0) - 1.0375).abs() < 1e-12);
        assert_eq!(kappa_bound(0.7, 0.0, 0.5, 0.02), 0.98);
        assert!((kappa_bound(1e-9, 0.3, 0.5, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(kappa_bound(0.0, 0.3, 0.5, 0.1), 0.9);
    }

    #[test]
    fn hetero_stats_cases() {
        let s = hetero_stats(&[1.0, 0.5], &[2.0, 2.0], &[1.0, 4.0]).unwrap();
        // y = (1, 1) constant
        assert_eq!(s.nu_r, 0.0);
        assert!(!s.rho_defined);
        // y = x: r̂ = a / b
        let a = [3.0, 1.0, 2.0];
        let b = [1.0, 2.0, 5.0];
        let s = hetero_stats(&optimal_ratios(&a, &b), &a, &b).unwrap();
        assert!((s.rho - 1.0).abs() < 1e-12);

        // two-point fixture (α, β) = (0.1, 10), p = 1, r̂ = r̂*:
        // x = (1, 0.1/√10), y = (1, 0.01·√10); √b = (1, √10)
        let s = hetero_stats(&[1.0, 0.01], &[1.0, 0.1], &[1.0, 10.0]).unwrap();
        let two_point_nu = |u: f64, v: f64| ((u - v) / (u + v)).powi(2);
        let sq10 = 10f64.sqrt();
        assert!((s.nu_r - two_point_nu(1.0, 0.01 * sq10)).abs() < 1e-14);
        assert!((s.nu_sqrtb - two_point_nu(1.0, sq10)).abs() < 1e-14);
        // two points with the same ordering are perfectly correlated
        assert!((s.rho - 1.0).abs() < 1e-12);
        assert!(hetero_stats(&[1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn brute_force_finds_closed_form() {
        let a = [1.0, 0.1];
        let b = [1.0, 10.0];
        let (r, best) = brute_force_phi_max(&a, &b, 301).unwrap();
        let muon = phi(&[1.0, 1.0], &a, &b).unwrap();
        assert!((best / muon - kappa_layer(0.1, 10.0)).abs() < 0.02);
        let cell = (1000f64.ln()) / 300.0;
        let found = (r[1] / r[0]).ln();
        let want = (0.01f64).ln();
        assert!((found - want).abs() <= cell + 1e-12);

        let (_, best) = brute_force_phi_max(&[2.0, 4.0], &[1.0, 2.0], 101).unwrap();
        let muon = phi(&[1.0, 1.0], &[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert!((best / muon - 1.0).abs() < 0.02);
        assert!(brute_force_phi_max(&[1.0], &[1.0], 10).is_err());
    }

    #[test]
    fn kappa_layer_is_at_least_one() {
        let axis: Vec<f64> = (0..50)
            .map(|i| (0.05f64.ln() + (400f64.ln()) * i as f64 / 49.0).exp())
            .collect();
        for &alpha in &axis {
            for &beta in &axis {
                let k = kappa_layer(alpha, beta);
                assert!(k >= 1.0 - 1e-12);
                // equality only when a/b is constant: α = β
                if k < 1.0 + 1e-9 {
                    assert!((alpha / beta - 1.0).abs() < 1e-3);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn phi_is_scale_invariant(
            v in prop::collection::vec((0.01f64..10.0, 0.01f64..10.0, 0.01f64..10.0), 2..6),
            c in 1e-3f64..1e3,
        ) {
            let r: Vec<f64> = v.iter().map(|t| t.0).collect();
            let a: Vec<f64> = v.iter().map(|t| t.1).collect();
            let b: Vec<f64> = v.iter().map(|t| t.2).collect();
            let rc: Vec<f64> = r.iter().map(|x| c * x).collect();
            let p1 = phi(&r, &a, &b).unwrap();
            prop_assert!((phi(&rc, &a, &b).unwrap() - p1).abs() <= 1e-10 * p1);
        }

        #[test]
        fn geometric_form_matches(
            v in prop::collection::vec((0.01f64..10.0, 0.01f64..10.0, 0.01f64..10.0), 2..6),
        ) {
            let r: Vec<f64> = v.iter().map(|t| t.0).collect();
            let a: Vec<f64> = v.iter().map(|t| t.1).collect();
            let b: Vec<f64> = v.iter().map(|t| t.2).collect();
            let alg = kappa_eff(&r, &a, &b).unwrap();
            let geo = kappa_eff_geometric(&r, &a, &b).unwrap();
            prop_assert!((alg - geo).abs() <= 1e-10 * alg.max(1.0));
            prop_assert!(alg <= phi_opt(&a, &b) / phi(&vec![1.0; a.len()], &a, &b).unwrap() + 1e-10);
        }
    }
}
