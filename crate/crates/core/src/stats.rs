//! Scalar statistics used by the identity checks: batch means over RNG
//! substreams, and a chi-square two-sample homogeneity test on histogram
//! counts (with the regularized incomplete gamma function it needs).

/// Mean of batch means and its standard error. Batches are the per-stream
/// partial results, so correlations inside a stream never bias the error.
pub fn batch_mean(values: &[f64]) -> (f64, f64) {
    let b = values.len();
    assert!(b >= 2, "need at least two batches");
    let mean = values.iter().sum::<f64>() / b as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (b as f64 * (b as f64 - 1.0))).sqrt())
}

/// Result of a chi-square homogeneity test between two binned samples.
#[derive(Clone, Copy, Debug)]
pub struct TwoSampleResult {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square test on per-bin counts. Empty bins (zero in both
/// samples) are skipped; sample sizes may differ.
pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> TwoSampleResult {
    assert_eq!(a.len(), b.len(), "count vectors must align");
    let n1: u64 = a.iter().sum();
    let n2: u64 = b.iter().sum();
    assert!(n1 > 0 && n2 > 0, "both samples must be nonempty");
    let k1 = (n2 as f64 / n1 as f64).sqrt();
    let k2 = (n1 as f64 / n2 as f64).sqrt();
    let mut chi2 = 0.0;
    let mut used = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let tot = x + y;
        if tot == 0 {
            continue;
        }
        used += 1;
        let d = k1 * x as f64 - k2 * y as f64;
        chi2 += d * d / tot as f64;
    }
    let dof = used.saturating_sub(1).max(1);
    TwoSampleResult {
        chi2,
        dof,
        p_value: chi2_sf(chi2, dof),
    }
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom: `Q(dof/2, x/2)`.
pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    reg_gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`, `a > 0`.
pub fn reg_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_contfrac(a, x)
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn reg_gamma_p(a: f64, x: f64) -> f64 {
    1.0 - reg_gamma_q(a, x)
}

const CONVERGENCE: f64 = 3e-16;
const MAX_ITER: usize = 10_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * CONVERGENCE {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the standard continued fraction.
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CONVERGENCE {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-15 for `z > 0`.
pub fn ln_gamma(z: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(z > 0.0);
    let z = z - 1.0;
    let mut x = 0.999_999_999_999_809_9;
    for (i, &c) in COEF.iter().enumerate() {
        x += c / (z + i as f64 + 1.0);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}
