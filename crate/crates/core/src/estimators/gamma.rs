use crate::Real;

use super::EstimateError;

/// Normalized autocorrelation sampled at uniform bin centers starting at
/// zero: `gamma[i]` estimates the overlap correlation at
/// `l = (i + 1/2) * width`, scaled so the true curve starts at 1.
#[derive(Clone, Debug)]
pub struct GammaTable<T> {
    pub width: T,
    pub gamma: Vec<T>,
    pub stderr: Vec<T>,
}

/// Signed chord-length density reconstructed from curvature of the
/// autocorrelation, on the same grid as its source table.
#[derive(Clone, Debug)]
pub struct SignedCld<T> {
    pub width: T,
    pub density: Vec<T>,
    /// Per-bin error combining the propagated table noise with the
    /// normalizer's own uncertainty (the latter is common-mode across
    /// bins, so neighboring errors are correlated).
    pub stderr: Vec<T>,
    /// Fitted slope of gamma at zero (negative for any body); the density
    /// is curvature divided by its magnitude.
    pub gamma_slope0: T,
    pub gamma_slope0_stderr: T,
    pub gamma_intercept0: T,
}

/// Near-zero linear fit of an autocorrelation table.
#[derive(Clone, Copy, Debug)]
pub struct ZeroFit<T> {
    pub intercept: T,
    pub slope: T,
    /// Standard error of the slope: exact inverse-variance form when the
    /// fit is weighted, residual-based otherwise.
    pub slope_stderr: T,
}

impl<T: Real> GammaTable<T> {
    #[inline]
    pub fn center(&self, i: usize) -> T {
        self.width * (T::of_usize(i) + T::of(0.5))
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Linear fit through the first `n_fit` bins with data.
    ///
    /// Bins are weighted by inverse error variance when every selected bin
    /// carries a positive standard error; otherwise the fit is unweighted.
    /// Weighting matters for sampled tables: the value at distance `x` is a
    /// tally scaled by `1/x^2`, so the bins nearest zero are by far the
    /// noisiest and would otherwise dominate the fit.
    ///
    /// Panics if fewer than two bins hold data.
    pub fn fit_at_zero(&self, n_fit: usize) -> ZeroFit<T> {
        let sel: Vec<usize> = (0..self.len())
            .filter(|&i| self.gamma[i] != T::zero())
            .take(n_fit)
            .collect();
        assert!(sel.len() >= 2, "zero fit needs two populated bins");
        let weighted = sel.iter().all(|&i| self.stderr[i] > T::zero());
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) =
            (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
        for &i in &sel {
            let (x, y) = (self.center(i), self.gamma[i]);
            let w = if weighted {
                (self.stderr[i] * self.stderr[i]).recip()
            } else {
                T::one()
            };
            sw += w;
            sx += w * x;
            sy += w * y;
            sxx += w * x * x;
            sxy += w * x * y;
        }
        let det = sw * sxx - sx * sx;
        let slope = (sw * sxy - sx * sy) / det;
        let intercept = (sy - slope * sx) / sw;
        let slope_stderr = if weighted {
            (sw / det).sqrt()
        } else if sel.len() > 2 {
            // No per-bin errors: estimate the point scatter from residuals.
            let mut ss = T::zero();
            for &i in &sel {
                let r = self.gamma[i] - (intercept + slope * self.center(i));
                ss += r * r;
            }
            let n = T::of_usize(sel.len());
            (ss / (n - T::of(2.0)) * sw / det).sqrt()
        } else {
            T::zero()
        };
        ZeroFit {
            intercept,
            slope,
            slope_stderr,
        }
    }
}

/// Solves a small dense linear system by Gaussian elimination with partial
/// pivoting. `None` when singular.
pub(crate) fn solve_linear<T: Real, const N: usize>(
    mut m: [[T; N]; N],
    mut rhs: [T; N],
) -> Option<[T; N]> {
    for col in 0..N {
        let mut piv = col;
        for r in col + 1..N {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col] == T::zero() {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let inv = m[col][col].recip();
        for r in col + 1..N {
            let f = m[r][col] * inv;
            if f == T::zero() {
                continue;
            }
            for c in col..N {
                m[r][c] = m[r][c] - f * m[col][c];
            }
            rhs[r] = rhs[r] - f * rhs[col];
        }
    }
    let mut out = [T::zero(); N];
    for row in (0..N).rev() {
        let mut acc = rhs[row];
        for c in row + 1..N {
            acc = acc - m[row][c] * out[c];
        }
        out[row] = acc / m[row][row];
    }
    Some(out)
}

/// 3x3 convenience wrapper around [`solve_linear`].
#[cfg(test)]
pub(crate) fn solve3<T: Real>(m: [[T; 3]; 3], rhs: [T; 3]) -> Option<[T; 3]> {
    solve_linear(m, rhs)
}

/// Number of leading bins used for the slope-at-zero fit.
pub const SLOPE_FIT_BINS: usize = 5;

/// Reconstructs the signed chord-length density as the second derivative of
/// the autocorrelation, normalized by the magnitude of its slope at zero.
///
/// The curvature at each grid point comes from a local cubic least-squares
/// fit over `window` consecutive bins (odd, at least 5); windows are
/// shifted, not shrunk, at the boundaries. Offsets are measured from the
/// target bin, so with the cubic term the curvature estimate is exact for
/// any cubic autocorrelation even in the shifted edge windows. Standard
/// errors propagate the per-bin table errors through the (linear) fit
/// weights.
pub fn signed_cld_from_gamma<T: Real>(
    table: &GammaTable<T>,
    window: usize,
) -> Result<SignedCld<T>, EstimateError> {
    if window < 5 || window % 2 == 0 {
        return Err(EstimateError::BadWindow(window));
    }
    let n = table.len();
    if n < window || n < SLOPE_FIT_BINS + 1 {
        return Err(EstimateError::GridTooCoarse { n_bins: n, window });
    }
    if table.gamma.iter().filter(|&&g| g != T::zero()).count() < 2 {
        return Err(EstimateError::GridTooCoarse { n_bins: n, window });
    }
    let fit = table.fit_at_zero(SLOPE_FIT_BINS);
    let norm = fit.slope.abs();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(EstimateError::GridTooCoarse { n_bins: n, window });
    }
    // Relative variance of the normalizer, applied common-mode below.
    let rel_norm_var = {
        let r = fit.slope_stderr / fit.slope;
        r * r
    };
    let h2 = table.width * table.width;
    let m = window / 2;

    let mut density = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for i in 0..n {
        let start = i.saturating_sub(m).min(n - window);
        // Offsets in integer grid units from the target bin keep the
        // normal matrix well conditioned.
        let mut s = [T::zero(); 7];
        let mut t = [T::zero(); 4];
        for j in 0..window {
            let u = T::of_usize(start + j) - T::of_usize(i);
            let y = table.gamma[start + j];
            let mut p = T::one();
            for sk in s.iter_mut() {
                *sk += p;
                p = p * u;
            }
            let mut p = T::one();
            for tk in t.iter_mut() {
                *tk += p * y;
                p = p * u;
            }
        }
        let mat = [
            [s[0], s[1], s[2], s[3]],
            [s[1], s[2], s[3], s[4]],
            [s[2], s[3], s[4], s[5]],
            [s[3], s[4], s[5], s[6]],
        ];
        // Weights extracting the quadratic coefficient of the local fit.
        let a = solve_linear(mat, [T::zero(), T::zero(), T::one(), T::zero()])
            .ok_or(EstimateError::BadWindow(window))?;
        let c = a[0] * t[0] + a[1] * t[1] + a[2] * t[2] + a[3] * t[3];
        // Propagate per-bin errors through the same linear weights.
        let mut var = T::zero();
        for j in 0..window {
            let u = T::of_usize(start + j) - T::of_usize(i);
            let w = a[0] + (a[1] + (a[2] + a[3] * u) * u) * u;
            let sig = table.stderr[start + j];
            var += w * w * sig * sig;
        }
        let two = T::of(2.0);
        let d = two * c / (h2 * norm);
        let stat = two * var.sqrt() / (h2 * norm);
        density.push(d);
        stderr.push((stat * stat + d * d * rel_norm_var).sqrt());
    }
    Ok(SignedCld {
        width: table.width,
        density,
        stderr,
        gamma_slope0: fit.slope,
        gamma_slope0_stderr: fit.slope_stderr,
        gamma_intercept0: fit.intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from(f: impl Fn(f64) -> f64, width: f64, n: usize, sigma: f64) -> GammaTable<f64> {
        GammaTable {
            width,
            gamma: (0..n).map(|i| f(width * (i as f64 + 0.5))).collect(),
            stderr: vec![sigma; n],
        }
    }

    #[test]
    fn quadratic_recovered_exactly() {
        // gamma = 1 - x + 0.3 x^2 has constant curvature 0.6 and slope -1.
        let t = table_from(|x| 1.0 - x + 0.3 * x * x, 0.01, 64, 0.0);
        let cld = signed_cld_from_gamma(&t, 7).unwrap();
        for (i, &v) in cld.density.iter().enumerate() {
            assert!(
                (v - 0.6 / cld.gamma_slope0.abs()).abs() < 1e-8,
                "bin {i}: {v}"
            );
        }
        // Slope fit sees the quadratic term only at O(width).
        assert!((cld.gamma_slope0 + 1.0).abs() < 0.02);
    }

    #[test]
    fn ball_autocorrelation_gives_linear_density() {
        // Unit ball: gamma = 1 - 3l/4 + l^3/16 on [0,2]; curvature 3l/8,
        // slope at zero -3/4, so the normalized density is l/2.
        let n = 256;
        let width = 2.0 / n as f64;
        let t = table_from(|x| 1.0 - 0.75 * x + x.powi(3) / 16.0, width, n, 0.0);
        let cld = signed_cld_from_gamma(&t, 7).unwrap();
        assert!((cld.gamma_slope0 + 0.75).abs() < 1e-3);
        for i in 0..n {
            let l = t.center(i);
            assert!(
                (cld.density[i] - l / 2.0).abs() < 1e-3,
                "l={l} d={}",
                cld.density[i]
            );
        }
    }

    #[test]
    fn zero_fit_downweights_noisy_leading_bins() {
        // A sampled table's first bins are scaled-up tallies with large
        // errors; corrupt them badly and make their stated errors honest
        // about it. The weighted fit must recover the clean line anyway.
        let width = 2.0 / 64.0;
        let mut t = table_from(|x| 1.0 - 0.75 * x, width, 64, 1e-4);
        t.gamma[0] = 4.1; // wildly off, as 1/x^2 amplification produces
        t.stderr[0] = 5.0;
        t.gamma[1] = 0.2;
        t.stderr[1] = 0.8;
        let fit = t.fit_at_zero(SLOPE_FIT_BINS);
        assert!((fit.intercept - 1.0).abs() < 1e-2, "intercept {}", fit.intercept);
        assert!((fit.slope + 0.75).abs() < 0.05, "slope {}", fit.slope);
        assert!(fit.slope_stderr > 0.0);

        // Degenerate-table guard: a table with a single populated bin is
        // rejected rather than fitted.
        let mut dead = table_from(|_| 0.0, width, 64, 0.0);
        dead.gamma[0] = 1.0;
        assert!(matches!(
            signed_cld_from_gamma(&dead, 5),
            Err(EstimateError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn error_propagation_scales_with_input_noise() {
        let quiet = table_from(|x| 1.0 - x, 0.01, 32, 1e-4);
        let loud = table_from(|x| 1.0 - x, 0.01, 32, 1e-2);
        let a = signed_cld_from_gamma(&quiet, 5).unwrap();
        let b = signed_cld_from_gamma(&loud, 5).unwrap();
        for i in 0..32 {
            assert!((b.stderr[i] / a.stderr[i] - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn window_validation() {
        let t = table_from(|x| 1.0 - x, 0.1, 16, 0.0);
        assert!(matches!(
            signed_cld_from_gamma(&t, 4),
            Err(EstimateError::BadWindow(4))
        ));
        assert!(matches!(
            signed_cld_from_gamma(&t, 3),
            Err(EstimateError::BadWindow(3))
        ));
        let tiny = table_from(|x| 1.0 - x, 0.1, 5, 0.0);
        assert!(matches!(
            signed_cld_from_gamma(&tiny, 7),
            Err(EstimateError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn solve3_inverts_known_system() {
        let m: [[f64; 3]; 3] = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let x = solve3(m, [3.0, 10.0, 9.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
        assert!((x[2] - 3.5).abs() < 1e-12);
    }
}
