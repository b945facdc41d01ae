//! Gauss-Legendre quadrature helpers for brute-force cross-checks.
//!
//! Deliberately independent of the library's own integral bookkeeping:
//! everything here evaluates the integrand pointwise on quadrature nodes,
//! so an index or sign error in the closed-form side cannot hide.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// found by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 2);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

/// Legendre `P_n` and its derivative at `x` via the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * cur - (kf - 1.0) * prev) / kf;
        prev = cur;
        cur = next;
    }
    let dp = n as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, dp)
}

/// `int_{x=a}^{b} int_{y=c}^{d} f(y - x) dy dx` by tensor quadrature.
pub fn rect_quad(
    f: &dyn Fn(f64) -> f64,
    (a, b): (f64, f64),
    (c, d): (f64, f64),
    rule: &[(f64, f64)],
) -> f64 {
    let (hx, mx) = ((b - a) / 2.0, (b + a) / 2.0);
    let (hy, my) = ((d - c) / 2.0, (d + c) / 2.0);
    let mut acc = 0.0;
    for &(u, wu) in rule {
        let x = mx + hx * u;
        let mut inner = 0.0;
        for &(v, wv) in rule {
            inner += wv * f(my + hy * v - x);
        }
        acc += wu * inner;
    }
    acc * hx * hy
}

/// `int over a <= x <= y <= b of f(y - x) dy dx` by nesting: the inner
/// integral runs over `[x, b]` with its own scaled rule.
pub fn ordered_square_quad(f: &dyn Fn(f64) -> f64, (a, b): (f64, f64), rule: &[(f64, f64)]) -> f64 {
    let (hx, mx) = ((b - a) / 2.0, (b + a) / 2.0);
    let mut acc = 0.0;
    for &(u, wu) in rule {
        let x = mx + hx * u;
        let (hy, my) = ((b - x) / 2.0, (b + x) / 2.0);
        let mut inner = 0.0;
        for &(v, wv) in rule {
            inner += wv * f(my + hy * v - x);
        }
        acc += wu * inner * hy;
    }
    acc * hx
}

/// Double integral of `f(y - x)` over ordered pairs `x < y` with both
/// points inside the (sorted, disjoint) spans.
pub fn ordered_pair_integral(
    spans: &[(f64, f64)],
    f: &dyn Fn(f64) -> f64,
    rule: &[(f64, f64)],
) -> f64 {
    let mut acc = 0.0;
    for (k, &sk) in spans.iter().enumerate() {
        acc += ordered_square_quad(f, sk, rule);
        for &sj in &spans[..k] {
            acc += rect_quad(f, sj, sk, rule);
        }
    }
    acc
}
