//! Point-evaluation functionals of the autocorrelation: for a test
//! function `phi`, the quantity
//!
//! ```text
//! D(phi) = (1/V) iint phi(|x - y|) / (4 pi |x - y|^2) dx dy
//!        = int gamma(l) phi(l) dl
//! ```
//!
//! is computed along four independent routes — direct pair sampling, the
//! signed radius decomposition, the signed chord decomposition, and
//! quadrature of a tabulated autocorrelation — which must agree within
//! their Monte Carlo errors. Choosing `phi(l) = 4 pi l^2` makes `D` the
//! body volume, with the pair route exact sample by sample.

use thiserror::Error;

use crate::estimators::{
    chord_decompose, radii_decompose, EstimateError, EstimatorConfig, GammaTable,
};
use crate::geometry::{Body, Line};
use crate::report::IdentityRecord;
use crate::sampling::{roles, sample_mu_line, sample_nu_ray, sample_point_pair};
use crate::signedhist::CompensatedSum;
use crate::stats::batch_mean;
use crate::Real;

#[derive(Debug, Error)]
pub enum DiracError {
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("pair route needs phi vanishing at least quadratically at 0; {0} does not")]
    UnboundedWeight(String),
    #[error("cannot parse test function {0:?}: expected exp:A, pow:P or ind:C")]
    Parse(String),
}

/// Test function families with closed-form repeated antiderivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestFunction<T> {
    /// `scale * exp(-alpha x)`.
    Exp { alpha: T, scale: T },
    /// `scale * x^p`, `p >= 0`.
    Power { p: i32, scale: T },
    /// `scale * [x < cut]`.
    Indicator { cut: T, scale: T },
}

impl<T: Real> TestFunction<T> {
    /// Parses `exp:ALPHA`, `pow:P`, `ind:CUT` (unit scale), or `volume`
    /// (the `4 pi x^2` kernel whose functional is the body volume).
    pub fn parse(s: &str) -> Result<Self, DiracError> {
        let bad = || DiracError::Parse(s.to_string());
        if s == "volume" {
            return Ok(Self::volume_kernel());
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "exp" => {
                let alpha: f64 = arg.parse().map_err(|_| bad())?;
                if !(alpha > 0.0) {
                    return Err(bad());
                }
                Ok(TestFunction::Exp {
                    alpha: T::of(alpha),
                    scale: T::one(),
                })
            }
            "pow" => {
                let p: i32 = arg.parse().map_err(|_| bad())?;
                if p < 0 {
                    return Err(bad());
                }
                Ok(TestFunction::Power { p, scale: T::one() })
            }
            "ind" => {
                let cut: f64 = arg.parse().map_err(|_| bad())?;
                if !(cut > 0.0) {
                    return Err(bad());
                }
                Ok(TestFunction::Indicator {
                    cut: T::of(cut),
                    scale: T::one(),
                })
            }
            _ => Err(bad()),
        }
    }

    /// `4 pi x^2`: the test function whose functional is the body volume.
    pub fn volume_kernel() -> Self {
        TestFunction::Power {
            p: 2,
            scale: T::of(4.0) * T::PI(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TestFunction::Exp { alpha, scale } => format!("{scale} exp(-{alpha} x)"),
            TestFunction::Power { p, scale } => format!("{scale} x^{p}"),
            TestFunction::Indicator { cut, scale } => format!("{scale} [x < {cut}]"),
        }
    }

    /// `phi(x)`.
    pub fn eval(&self, x: T) -> T {
        match *self {
            TestFunction::Exp { alpha, scale } => scale * (-alpha * x).exp(),
            TestFunction::Power { p, scale } => scale * x.powi(p),
            TestFunction::Indicator { cut, scale } => {
                if x < cut {
                    scale
                } else {
                    T::zero()
                }
            }
        }
    }

    /// First antiderivative `Phi(x) = int_0^x phi`.
    pub fn antiderivative(&self, x: T) -> T {
        match *self {
            TestFunction::Exp { alpha, scale } => scale * (T::one() - (-alpha * x).exp()) / alpha,
            TestFunction::Power { p, scale } => scale * x.powi(p + 1) / T::of_usize(p as usize + 1),
            TestFunction::Indicator { cut, scale } => scale * x.min(cut),
        }
    }

    /// Second antiderivative `int_0^x (x - r) phi(r) dr = int_0^x Phi`.
    pub fn double_antiderivative(&self, x: T) -> T {
        match *self {
            TestFunction::Exp { alpha, scale } => {
                scale * (alpha * x - T::one() + (-alpha * x).exp()) / (alpha * alpha)
            }
            TestFunction::Power { p, scale } => {
                let p1 = T::of_usize(p as usize + 1);
                let p2 = T::of_usize(p as usize + 2);
                scale * x.powi(p + 2) / (p1 * p2)
            }
            TestFunction::Indicator { cut, scale } => {
                if x <= cut {
                    scale * x * x.half()
                } else {
                    scale * (cut * x - cut * cut.half())
                }
            }
        }
    }

    /// Whether `phi(x)/x^2` stays bounded as `x -> 0`, which the direct
    /// pair route needs for finite variance.
    pub fn pair_safe(&self) -> bool {
        matches!(self, TestFunction::Power { p, .. } if *p >= 2)
    }
}

/// Which sampling route produced a functional estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiracMethod {
    Pairs,
    Radii,
    Chords,
    Gamma,
}

impl DiracMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DiracMethod::Pairs => "pairs",
            DiracMethod::Radii => "radii",
            DiracMethod::Chords => "chords",
            DiracMethod::Gamma => "gamma",
        }
    }
}

/// One route's estimate of `D(phi)`.
#[derive(Clone, Copy, Debug)]
pub struct DiracEstimate {
    pub method: DiracMethod,
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
}

/// Direct route: `V * E[phi(R) / (4 pi R^2)]` over uniform interior point
/// pairs. Exact per sample when `phi` is the volume kernel.
pub fn dirac_pairs<T: Real>(
    body: &Body<T>,
    phi: &TestFunction<T>,
    config: &EstimatorConfig,
) -> Result<DiracEstimate, DiracError> {
    if !phi.pair_safe() {
        return Err(DiracError::UnboundedWeight(phi.describe()));
    }
    let plan = config.plan.with_role(roles::DIRAC_PAIRS);
    let four_pi = T::of(4.0) * T::PI();
    let chunks: Vec<Result<(CompensatedSum<T>, u64), EstimateError>> =
        plan.run(|chunk, mut rng| {
            let quota = plan.quota(config.samples, chunk);
            let mut sum = CompensatedSum::zero();
            for _ in 0..quota {
                let pair = sample_point_pair(&mut rng, body)?;
                let r2 = (pair.a - pair.b).norm_sq();
                if r2 == T::zero() {
                    // Coincident pair: take the limit of the weight, which
                    // is nonzero only for exactly quadratic kernels.
                    if let TestFunction::Power { p: 2, scale } = *phi {
                        sum.add(scale / four_pi);
                    }
                    continue;
                }
                sum.add(phi.eval(r2.sqrt()) / (four_pi * r2));
            }
            Ok((sum, quota))
        });
    let volume = body.metrics.volume.as_f64();
    let mut per_chunk = Vec::new();
    let mut n = 0u64;
    for c in chunks {
        let (sum, quota) = c?;
        if quota > 0 {
            per_chunk.push(volume * sum.value().as_f64() / quota as f64);
        }
        n += quota;
    }
    let (value, stderr) = batch_mean(&per_chunk);
    Ok(DiracEstimate {
        method: DiracMethod::Pairs,
        value,
        stderr,
        n_samples: n,
    })
}

/// Signed radius route: the mean over interior rays of the alternating sum
/// `sum_k q_k Phi(R_k)` over crossing distances.
pub fn dirac_radii<T: Real>(
    body: &Body<T>,
    phi: &TestFunction<T>,
    config: &EstimatorConfig,
) -> Result<DiracEstimate, DiracError> {
    let plan = config.plan.with_role(roles::DIRAC_RADII);
    let eps = body.eps();
    let chunks: Vec<Result<(CompensatedSum<T>, u64), EstimateError>> =
        plan.run(|chunk, mut rng| {
            let quota = plan.quota(config.samples, chunk);
            let mut sum = CompensatedSum::zero();
            let mut n = 0u64;
            let mut degenerate = 0u64;
            while n < quota {
                let ray = sample_nu_ray(&mut rng, body)?;
                let line = Line::from_unit(ray.origin, ray.direction);
                let forward = body.intersect_line(&line).clip_forward_ray();
                match radii_decompose(&forward, eps) {
                    Ok(d) => {
                        let mut ray_sum = T::zero();
                        for ev in &d.events {
                            ray_sum += T::of(ev.charge as f64) * phi.antiderivative(ev.length);
                        }
                        sum.add(ray_sum);
                        n += 1;
                        degenerate = 0;
                    }
                    Err(_) => {
                        degenerate += 1;
                        if degenerate >= 10_000 {
                            return Err(EstimateError::HitStall(degenerate));
                        }
                    }
                }
            }
            Ok((sum, n))
        });
    let mut per_chunk = Vec::new();
    let mut n = 0u64;
    for c in chunks {
        let (sum, quota) = c?;
        if quota > 0 {
            per_chunk.push(sum.value().as_f64() / quota as f64);
        }
        n += quota;
    }
    let (value, stderr) = batch_mean(&per_chunk);
    Ok(DiracEstimate {
        method: DiracMethod::Radii,
        value,
        stderr,
        n_samples: n,
    })
}

/// Which normalization length divides the chord-route sum.
///
/// The functional is `(1 / l_N) * (1/N) sum_events q * Lambda_phi(l)`; the
/// two admissible choices of `l_N` agree for any body, so comparing them is
/// itself a consistency check on the fourth-moment identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChordNormalization {
    /// The Cauchy mean chord `4V/S`, taken from closed-form metrics.
    #[default]
    CauchyMean,
    /// The empirical `pi <l^4> / (3V)`, with the fourth moment taken over
    /// the same signed chord events that feed the functional.
    EmpiricalFourthMoment,
}

impl ChordNormalization {
    pub fn describe(&self) -> &'static str {
        match self {
            ChordNormalization::CauchyMean => "cauchy",
            ChordNormalization::EmpiricalFourthMoment => "empirical",
        }
    }
}

/// Signed chord route: `(1 / l_N) * (1/N) sum_events q * Lambda_phi(l)`,
/// where `Lambda_phi` is the double antiderivative of `phi`, events come
/// from the pairwise chord decomposition, `N` is the total charge, and the
/// normalization length `l_N` is the Cauchy mean chord `4V/S`.
pub fn dirac_chords<T: Real>(
    body: &Body<T>,
    phi: &TestFunction<T>,
    config: &EstimatorConfig,
) -> Result<DiracEstimate, DiracError> {
    dirac_chords_with(body, phi, config, ChordNormalization::CauchyMean)
}

/// Signed chord route with an explicit choice of the normalization length:
/// either the closed-form Cauchy mean chord `4V/S` or the empirical
/// `pi <l^4> / (3V)` computed from the same signed events.
pub fn dirac_chords_with<T: Real>(
    body: &Body<T>,
    phi: &TestFunction<T>,
    config: &EstimatorConfig,
    normalization: ChordNormalization,
) -> Result<DiracEstimate, DiracError> {
    let plan = config.plan.with_role(roles::DIRAC_CHORDS);
    let center = body.metrics.bounding_center;
    let radius = body.metrics.bounding_radius;
    type ChordChunk<T> = (CompensatedSum<T>, CompensatedSum<T>, i64, u64);
    let chunks: Vec<Result<ChordChunk<T>, EstimateError>> = plan.run(|chunk, mut rng| {
        let quota = plan.quota(config.samples, chunk);
        let mut sum = CompensatedSum::zero();
        let mut l4_sum = CompensatedSum::zero();
        let mut charge = 0i64;
        let mut hits = 0u64;
        let mut misses = 0u64;
        while hits < quota {
            let line = sample_mu_line::<T>(&mut rng, center, radius);
            let ivs = body.intersect_line(&line);
            if ivs.is_empty() {
                misses += 1;
                if misses >= 1_000_000 {
                    return Err(EstimateError::HitStall(misses));
                }
                continue;
            }
            misses = 0;
            hits += 1;
            let d = chord_decompose(&ivs)?;
            charge += d.total_charge();
            for ev in d.all_events() {
                let q = T::of(ev.charge as f64);
                sum.add(q * phi.double_antiderivative(ev.length));
                let l2 = ev.length * ev.length;
                l4_sum.add(q * l2 * l2);
            }
        }
        Ok((sum, l4_sum, charge, hits))
    });
    let volume = body.metrics.volume.as_f64();
    let surface_over_4v = body.metrics.surface.as_f64() / (4.0 * volume);
    // Empirical path: (1/l_N) * sum/N with l_N = pi * (l4/N) / (3V); the
    // total charge N cancels, leaving 3V/pi * sum / l4.
    let empirical_scale = 3.0 * volume / std::f64::consts::PI;
    let mut per_chunk = Vec::new();
    let mut total_sum = 0.0;
    let mut total_l4 = 0.0;
    let mut total_charge = 0i64;
    let mut n = 0u64;
    for c in chunks {
        let (sum, l4_sum, charge, hits) = c?;
        let sum = sum.value().as_f64();
        let l4 = l4_sum.value().as_f64();
        match normalization {
            ChordNormalization::CauchyMean => {
                if charge != 0 {
                    per_chunk.push(surface_over_4v * sum / charge as f64);
                }
            }
            ChordNormalization::EmpiricalFourthMoment => {
                if l4 > 0.0 {
                    per_chunk.push(empirical_scale * sum / l4);
                }
            }
        }
        total_sum += sum;
        total_l4 += l4;
        total_charge += charge;
        n += hits;
    }
    let value = match normalization {
        ChordNormalization::CauchyMean => surface_over_4v * total_sum / total_charge as f64,
        ChordNormalization::EmpiricalFourthMoment => empirical_scale * total_sum / total_l4,
    };
    let (_, stderr) = batch_mean(&per_chunk);
    Ok(DiracEstimate {
        method: DiracMethod::Chords,
        value,
        stderr,
        n_samples: n,
    })
}

/// Quadrature route: midpoint rule `h * sum_i gamma_i phi(l_i)` over a
/// tabulated autocorrelation, with the table's standard errors propagated
/// bin by bin.
pub fn dirac_gamma<T: Real>(table: &GammaTable<T>, phi: &TestFunction<T>) -> DiracEstimate {
    let h = table.width;
    let mut sum = CompensatedSum::zero();
    let mut var = CompensatedSum::zero();
    for i in 0..table.len() {
        let f = phi.eval(table.center(i));
        sum.add(table.gamma[i] * f);
        let contrib = h * f * table.stderr[i];
        var.add(contrib * contrib);
    }
    DiracEstimate {
        method: DiracMethod::Gamma,
        value: (h * sum.value()).as_f64(),
        stderr: var.value().as_f64().sqrt(),
        n_samples: table.len() as u64,
    }
}

/// Pairwise agreement records for a set of route estimates: every pair
/// must agree within `mult` combined standard errors.
pub fn cross_check(estimates: &[DiracEstimate], mult: f64) -> Vec<IdentityRecord> {
    let mut records = Vec::new();
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            let sigma = a.stderr.hypot(b.stderr);
            records.push(IdentityRecord::sigma(
                format!("dirac_{}_vs_{}", a.method.name(), b.method.name()),
                a.value,
                sigma,
                b.value,
                mult,
            ));
        }
    }
    records
}
