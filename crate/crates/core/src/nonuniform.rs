//! Piecewise-constant density fields over CSG regions: optical lengths,
//! the optical chord-length distribution, and the density-weighted
//! analogues of the point-evaluation functional.
//!
//! A field assigns a constant density to each region of an ordered list,
//! later regions overriding earlier ones where they overlap (painter's
//! order), with density zero elsewhere inside a convex hull. Optical
//! lengths are then exact sums of density times in-region interval length,
//! with no quadrature error.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::dirac::TestFunction;
use crate::estimators::{EstimateError, EstimatorConfig};
use crate::geometry::{
    intersect_line, metrics, Aabb, Body, IntervalSet, Line, MetricsError, SolidSpec, Vec3,
};
use crate::report::{IdentityRecord, Tolerance};
use crate::sampling::{
    roles, sample_interior_point, sample_isotropic_direction, sample_mu_line,
};
use crate::signedhist::{CompensatedSum, MomentAccumulator, SignedHistogram, SignedSample};
use crate::Real;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("cannot read field file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse field file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("hull must be convex by construction (sphere, box, or their intersection)")]
    NonConvexHull,
    #[error("region {0} has non-finite or negative density {1}")]
    BadDensity(usize, f64),
    #[error("region {0} is not contained in the hull")]
    RegionOutsideHull(usize),
    #[error("region {index} is invalid: {reason}")]
    BadRegion { index: usize, reason: String },
}

/// One constant-density region.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityRegion<T> {
    pub solid: SolidSpec<T>,
    pub rho: T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFile<T> {
    hull: SolidSpec<T>,
    regions: Vec<DensityRegion<T>>,
}

/// Piecewise-constant density over an ordered region list inside a convex
/// hull; later regions override earlier ones on overlap.
#[derive(Clone, Debug)]
pub struct DensityField<T> {
    hull: Body<T>,
    regions: Vec<DensityRegion<T>>,
}

impl<T: Real> DensityField<T> {
    pub fn new(
        hull_solid: SolidSpec<T>,
        regions: Vec<DensityRegion<T>>,
    ) -> Result<Self, FieldError> {
        let hull = Body::new(hull_solid).map_err(FieldError::Metrics)?;
        if !hull.is_convex_by_construction() {
            return Err(FieldError::NonConvexHull);
        }
        for (i, region) in regions.iter().enumerate() {
            if !(region.rho >= T::zero()) || !region.rho.is_finite() {
                return Err(FieldError::BadDensity(i, region.rho.as_f64()));
            }
            region
                .solid
                .validate()
                .map_err(|e| FieldError::BadRegion {
                    index: i,
                    reason: e.to_string(),
                })?;
            let (center, radius) = region.solid.bounding_sphere();
            let aabb = region.solid.aabb();
            if !hull_contains(&hull.solid, center, radius, &aabb, hull.eps()) {
                return Err(FieldError::RegionOutsideHull(i));
            }
        }
        Ok(DensityField { hull, regions })
    }

    pub fn hull(&self) -> &Body<T> {
        &self.hull
    }

    pub fn regions(&self) -> &[DensityRegion<T>] {
        &self.regions
    }

    /// Density at a point: the last region containing it wins, background
    /// is zero.
    pub fn rho_at(&self, p: Vec3<T>) -> T {
        for region in self.regions.iter().rev() {
            if crate::geometry::contains(&region.solid, p) {
                return region.rho;
            }
        }
        T::zero()
    }

    /// Largest region density (zero for an empty field).
    pub fn max_rho(&self) -> T {
        self.regions
            .iter()
            .map(|r| r.rho)
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Whether the field is a single region structurally identical to the
    /// hull, i.e. a uniform body.
    pub fn is_uniform_hull(&self) -> bool {
        self.regions.len() == 1 && self.regions[0].solid == self.hull.solid
    }

    /// In-region intervals along a line after painter's-order resolution:
    /// each region keeps only the parts no later region claims. Regions
    /// with equal densities stay separate; only geometry is resolved.
    pub fn region_segments(&self, line: &Line<T>) -> Vec<(IntervalSet<T>, T)> {
        let eps = self.hull.eps();
        let mut claimed = IntervalSet::empty();
        let mut out = Vec::with_capacity(self.regions.len());
        for region in self.regions.iter().rev() {
            let ivs = intersect_line(&region.solid, line, eps);
            let own = ivs.difference(&claimed);
            claimed = claimed.union(&ivs);
            out.push((own, region.rho));
        }
        out
    }
}

impl<T: Real + serde::de::DeserializeOwned> DensityField<T> {
    /// Parses `{"hull": <csg>, "regions": [{"solid": <csg>, "rho": x}, ..]}`.
    pub fn from_json(json: &str) -> Result<Self, FieldError> {
        let file: FieldFile<T> = serde_json::from_str(json)?;
        Self::new(file.hull, file.regions)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, FieldError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Does the convex hull solid contain the ball `(center, radius)` with
/// box `aabb`? Exact for sphere and box hulls and intersections of them.
fn hull_contains<T: Real>(
    hull: &SolidSpec<T>,
    center: Vec3<T>,
    radius: T,
    aabb: &Aabb<T>,
    eps: T,
) -> bool {
    match hull {
        SolidSpec::Sphere {
            center: hc,
            radius: hr,
        } => (center - *hc).norm() + radius <= *hr + eps,
        SolidSpec::Cuboid { min, max } => {
            aabb.min.x >= min.x - eps
                && aabb.min.y >= min.y - eps
                && aabb.min.z >= min.z - eps
                && aabb.max.x <= max.x + eps
                && aabb.max.y <= max.y + eps
                && aabb.max.z <= max.z + eps
        }
        SolidSpec::Intersection(parts) => parts
            .iter()
            .all(|part| hull_contains(part, center, radius, aabb, eps)),
        SolidSpec::Union(parts) if parts.len() == 1 => {
            hull_contains(&parts[0], center, radius, aabb, eps)
        }
        _ => false,
    }
}

/// Optical length between two points: the density line integral, an exact
/// interval sum for piecewise-constant fields. Symmetric and additive
/// along the segment.
pub fn optical_length<T: Real>(field: &DensityField<T>, p: Vec3<T>, q: Vec3<T>) -> T {
    let sep = q - p;
    let total = sep.norm();
    if total == T::zero() {
        return T::zero();
    }
    let line = Line::new(p, sep);
    let mut sum = T::zero();
    for (ivs, rho) in field.region_segments(&line) {
        if rho > T::zero() {
            sum += rho * ivs.clip(T::zero(), total).total_length();
        }
    }
    sum
}

/// Forward optical radius: density line integral from `origin` along
/// `direction` to the hull boundary.
pub fn optical_radius<T: Real>(
    field: &DensityField<T>,
    origin: Vec3<T>,
    direction: Vec3<T>,
) -> T {
    let line = Line::new(origin, direction);
    let forward = field.hull.intersect_line(&line).clip_forward_ray();
    let Some(&(_, exit)) = forward.spans().last() else {
        return T::zero();
    };
    let mut sum = T::zero();
    for (ivs, rho) in field.region_segments(&line) {
        if rho > T::zero() {
            sum += rho * ivs.clip(T::zero(), exit).total_length();
        }
    }
    sum
}

/// Optical chord-length distribution: one nonnegative event per hull
/// chord, the optical length across it.
#[derive(Clone, Debug)]
pub struct MuTildeEstimate<T> {
    pub hist: SignedHistogram<T>,
    pub moments: MomentAccumulator<T>,
    pub chunks: Vec<MomentAccumulator<T>>,
    pub n_lines_hit: u64,
    pub n_lines_sampled: u64,
}

impl<T: Real> MuTildeEstimate<T> {
    /// Optical-chord moment with batch stderr.
    pub fn moment(&self, k: usize) -> (f64, f64) {
        let per_chunk: Vec<f64> = self
            .chunks
            .iter()
            .filter(|c| c.n_events() > 0)
            .map(|c| (c.weighted_sum(k) / c.total_charge()).as_f64())
            .collect();
        let value = (self.moments.weighted_sum(k) / self.moments.total_charge()).as_f64();
        (value, crate::estimators::chunk_stderr(&per_chunk))
    }
}

/// Samples invariant-measure lines through the hull and records the
/// optical length across each full hull chord.
pub fn estimate_mu_tilde<T: Real>(
    field: &DensityField<T>,
    config: &EstimatorConfig,
) -> Result<MuTildeEstimate<T>, EstimateError> {
    let center = field.hull.metrics.bounding_center;
    let radius = field.hull.metrics.bounding_radius;
    let diameter = T::of(2.0) * radius;
    let rho_max = field.max_rho();
    let natural_hi = if rho_max > T::zero() {
        diameter * rho_max
    } else {
        diameter
    };
    let (lo, hi) = config.hist_edges(natural_hi);
    let plan = config.plan.with_role(roles::OPTICAL);
    let chunks: Vec<Result<(SignedHistogram<T>, MomentAccumulator<T>, u64), EstimateError>> =
        plan.run(|chunk, mut rng| {
            let quota = plan.quota(config.samples, chunk);
            let mut hist = SignedHistogram::new(lo, hi, config.n_bins);
            let mut moments = MomentAccumulator::new();
            let mut hits = 0u64;
            let mut sampled = 0u64;
            let mut misses = 0u64;
            while hits < quota {
                let line = sample_mu_line::<T>(&mut rng, center, radius);
                sampled += 1;
                let hull_ivs = field.hull.intersect_line(&line);
                if hull_ivs.is_empty() {
                    misses += 1;
                    if misses >= 1_000_000 {
                        return Err(EstimateError::HitStall(misses));
                    }
                    continue;
                }
                misses = 0;
                hits += 1;
                let mut w = T::zero();
                for (ivs, rho) in field.region_segments(&line) {
                    if rho > T::zero() {
                        w += rho * ivs.total_length();
                    }
                }
                let ev = SignedSample::plus(w);
                hist.accumulate(ev);
                moments.accumulate(ev);
            }
            Ok((hist, moments, sampled))
        });
    let mut merged: Option<MuTildeEstimate<T>> = None;
    for chunk in chunks {
        let (hist, moments, sampled) = chunk?;
        match merged.as_mut() {
            None => {
                merged = Some(MuTildeEstimate {
                    hist,
                    n_lines_hit: moments.n_events(),
                    moments: moments.clone(),
                    chunks: vec![moments],
                    n_lines_sampled: sampled,
                });
            }
            Some(m) => {
                m.hist.merge(&hist)?;
                m.n_lines_hit += moments.n_events();
                m.moments.merge(&moments);
                m.chunks.push(moments);
                m.n_lines_sampled += sampled;
            }
        }
    }
    Ok(merged.expect("at least one stream"))
}

/// Density-pair functional `G = iint rho(r) rho(r') / (4 pi |r - r'|^2)`,
/// estimated in its finite-variance radius form: `V_hull` times the mean
/// of `rho(r) w(r, Omega)` over uniform hull points and isotropic
/// directions, `w` the forward optical radius. For a uniform unit-density
/// ball this is `S/4`.
#[derive(Clone, Copy, Debug)]
pub struct GEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
}

pub fn estimate_g<T: Real>(
    field: &DensityField<T>,
    config: &EstimatorConfig,
) -> Result<GEstimate, EstimateError> {
    let plan = config.plan.with_role(roles::OPTICAL ^ 0x47);
    let v_hull = field.hull.metrics.volume.as_f64();
    let chunks: Vec<Result<(CompensatedSum<T>, u64), EstimateError>> =
        plan.run(|chunk, mut rng| {
            let quota = plan.quota(config.samples, chunk);
            let mut sum = CompensatedSum::zero();
            for _ in 0..quota {
                let p = sample_interior_point(&mut rng, field.hull())?;
                let rho = field.rho_at(p);
                if rho > T::zero() {
                    let dir = sample_isotropic_direction::<T>(&mut rng);
                    sum.add(rho * optical_radius(field, p, dir));
                }
            }
            Ok((sum, quota))
        });
    let mut per_chunk = Vec::new();
    let mut total = CompensatedSum::<T>::zero();
    let mut n = 0u64;
    for c in chunks {
        let (sum, quota) = c?;
        if quota > 0 {
            per_chunk.push(v_hull * sum.value().as_f64() / quota as f64);
        }
        total.merge(&sum);
        n += quota;
    }
    let value = v_hull * total.value().as_f64() / n as f64;
    Ok(GEstimate {
        value,
        stderr: crate::estimators::chunk_stderr(&per_chunk),
        n_samples: n,
    })
}

/// Two-route check of the optical point-evaluation functional.
#[derive(Clone, Debug)]
pub struct OpticalDiracReport {
    /// Radius route: `V_hull * E[rho(r) Phi(w(r, Omega))]`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Chord route: `C * E[Lambda_phi(W)]` with `C = 2G / <W^2>`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub g: f64,
    pub g_stderr: f64,
    /// Optical chord normalization constant `2G / <W^2>`.
    pub c_mu_tilde: f64,
    pub c_mu_tilde_stderr: f64,
    pub mean_sq_optical: f64,
    pub n_radii: u64,
    pub n_chords: u64,
    pub record: IdentityRecord,
}

/// Compares the radius-route and chord-route values of the optical
/// functional for one test function, at 4 combined standard errors.
///
/// The radius samples provide both `E[rho Phi(w)]` (the left side) and
/// `G = V_hull E[rho w]`; the chord samples provide both `<W^2>` and
/// `E[Lambda_phi(W)]`. With `phi = 1` the two sides coincide by
/// construction, which exercises the normalization wiring alone.
pub fn dirac_optical<T: Real>(
    field: &DensityField<T>,
    phi: &TestFunction<T>,
    config: &EstimatorConfig,
) -> Result<OpticalDiracReport, EstimateError> {
    let v_hull = field.hull.metrics.volume.as_f64();

    // Radius side.
    let radii_plan = config.plan.with_role(roles::OPTICAL ^ 0x5244);
    let radii: Vec<Result<(CompensatedSum<T>, CompensatedSum<T>, u64), EstimateError>> =
        radii_plan.run(|chunk, mut rng| {
            let quota = radii_plan.quota(config.samples, chunk);
            let mut phi_sum = CompensatedSum::zero();
            let mut g_sum = CompensatedSum::zero();
            for _ in 0..quota {
                let p = sample_interior_point(&mut rng, field.hull())?;
                let rho = field.rho_at(p);
                if rho > T::zero() {
                    let dir = sample_isotropic_direction::<T>(&mut rng);
                    let w = optical_radius(field, p, dir);
                    phi_sum.add(rho * phi.antiderivative(w));
                    g_sum.add(rho * w);
                }
            }
            Ok((phi_sum, g_sum, quota))
        });

    // Chord side.
    let chord_plan = config.plan.with_role(roles::OPTICAL ^ 0x4348);
    let center = field.hull.metrics.bounding_center;
    let radius = field.hull.metrics.bounding_radius;
    let chords: Vec<Result<(CompensatedSum<T>, CompensatedSum<T>, u64), EstimateError>> =
        chord_plan.run(|chunk, mut rng| {
            let quota = chord_plan.quota(config.samples, chunk);
            let mut lam_sum = CompensatedSum::zero();
            let mut sq_sum = CompensatedSum::zero();
            let mut hits = 0u64;
            let mut misses = 0u64;
            while hits < quota {
                let line = sample_mu_line::<T>(&mut rng, center, radius);
                if field.hull.intersect_line(&line).is_empty() {
                    misses += 1;
                    if misses >= 1_000_000 {
                        return Err(EstimateError::HitStall(misses));
                    }
                    continue;
                }
                misses = 0;
                hits += 1;
                let mut w = T::zero();
                for (ivs, rho) in field.region_segments(&line) {
                    if rho > T::zero() {
                        w += rho * ivs.total_length();
                    }
                }
                lam_sum.add(phi.double_antiderivative(w));
                sq_sum.add(w * w);
            }
            Ok((lam_sum, sq_sum, hits))
        });

    // Point values from pooled sums; standard errors from the scatter of
    // per-chunk versions of the same ratios (G enters the right side, so
    // ratio noise batches with it).
    let mut lhs_chunks = Vec::new();
    let mut g_chunks = Vec::new();
    let mut rhs_chunks = Vec::new();
    let mut c_chunks = Vec::new();
    let mut phi_total = CompensatedSum::<T>::zero();
    let mut g_total = CompensatedSum::<T>::zero();
    let mut lam_total = CompensatedSum::<T>::zero();
    let mut sq_total = CompensatedSum::<T>::zero();
    let mut n_radii = 0u64;
    let mut n_chords = 0u64;
    let radii: Vec<(CompensatedSum<T>, CompensatedSum<T>, u64)> =
        radii.into_iter().collect::<Result<_, _>>()?;
    let chords: Vec<(CompensatedSum<T>, CompensatedSum<T>, u64)> =
        chords.into_iter().collect::<Result<_, _>>()?;
    for ((phi_sum, g_sum, n_r), (lam_sum, sq_sum, n_c)) in
        radii.iter().zip(chords.iter())
    {
        phi_total.merge(phi_sum);
        g_total.merge(g_sum);
        lam_total.merge(lam_sum);
        sq_total.merge(sq_sum);
        n_radii += n_r;
        n_chords += n_c;
        if *n_r == 0 || *n_c == 0 {
            continue;
        }
        let lhs_k = v_hull * phi_sum.value().as_f64() / *n_r as f64;
        let g_k = v_hull * g_sum.value().as_f64() / *n_r as f64;
        let sq_k = sq_sum.value().as_f64() / *n_c as f64;
        let lam_k = lam_sum.value().as_f64() / *n_c as f64;
        let c_k = 2.0 * g_k / sq_k;
        lhs_chunks.push(lhs_k);
        g_chunks.push(g_k);
        c_chunks.push(c_k);
        rhs_chunks.push(c_k * lam_k);
    }
    let lhs = v_hull * phi_total.value().as_f64() / n_radii as f64;
    let g = v_hull * g_total.value().as_f64() / n_radii as f64;
    let mean_sq_optical = sq_total.value().as_f64() / n_chords as f64;
    let c_mu_tilde = 2.0 * g / mean_sq_optical;
    let rhs = c_mu_tilde * lam_total.value().as_f64() / n_chords as f64;
    let lhs_stderr = crate::estimators::chunk_stderr(&lhs_chunks);
    let g_stderr = crate::estimators::chunk_stderr(&g_chunks);
    let rhs_stderr = crate::estimators::chunk_stderr(&rhs_chunks);
    let c_mu_tilde_stderr = crate::estimators::chunk_stderr(&c_chunks);
    let record = IdentityRecord::sigma(
        format!("optical_functional_radii_vs_chords[{}]", phi.describe()),
        lhs,
        lhs_stderr.hypot(rhs_stderr),
        rhs,
        4.0,
    );
    Ok(OpticalDiracReport {
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        g,
        g_stderr,
        c_mu_tilde,
        c_mu_tilde_stderr,
        mean_sq_optical,
        n_radii,
        n_chords,
        record,
    })
}

/// Analytic mass with Monte Carlo fallback marker.
#[derive(Clone, Copy, Debug)]
pub struct MassEstimate {
    pub value: f64,
    pub stderr: f64,
    /// False when any region volume had to be estimated by sampling.
    pub analytic: bool,
}

/// Total mass `sum_i rho_i * volume(effective region i)`, where region
/// `i`'s effective solid removes everything later regions paint over.
/// Uses closed-form volumes where the geometry kernel has them and
/// hit-or-miss sampling otherwise.
pub fn field_mass<T: Real>(
    field: &DensityField<T>,
    config: &EstimatorConfig,
) -> MassEstimate {
    let mut value = 0.0;
    let mut var = 0.0;
    let mut analytic = true;
    for (i, region) in field.regions().iter().enumerate() {
        if region.rho == T::zero() {
            continue;
        }
        let later: Vec<SolidSpec<T>> = field.regions()[i + 1..]
            .iter()
            .map(|r| r.solid.clone())
            .collect();
        let effective = match later.len() {
            0 => region.solid.clone(),
            1 => SolidSpec::difference(region.solid.clone(), later.into_iter().next().unwrap()),
            _ => SolidSpec::difference(region.solid.clone(), SolidSpec::Union(later)),
        };
        match metrics(&effective) {
            Ok(m) => value += region.rho.as_f64() * m.volume.as_f64(),
            Err(_) => {
                analytic = false;
                let mut rng = config
                    .plan
                    .with_role(roles::VOLUME ^ (i as u64))
                    .source(0);
                let (vol, se) =
                    crate::geometry::estimate_volume_mc(&effective, config.samples, &mut rng);
                value += region.rho.as_f64() * vol.as_f64();
                let contrib = region.rho.as_f64() * se.as_f64();
                var += contrib * contrib;
            }
        }
    }
    MassEstimate {
        value,
        stderr: var.sqrt(),
        analytic,
    }
}

/// Constant-of-motion check for the curvature-normalized density CLD.
#[derive(Clone, Debug)]
pub struct B3Report {
    pub mass: MassEstimate,
    /// Fourth moment of the curvature-normalized optical CLD, via
    /// `12 int x^2 gamma_u / |gamma_u'(0)|`.
    pub l4: f64,
    /// Slope of the unnormalized mass autocorrelation at zero lag.
    pub slope_at_zero: f64,
    pub c_mu_dot: f64,
    pub c_mu_dot_stderr: f64,
    /// `rho^2 S / 4` when the field is a uniform body; the constant must
    /// reproduce it.
    pub uniform_reference: Option<f64>,
    pub degenerate: bool,
    pub n_pairs: u64,
    pub n_lines: u64,
    pub records: Vec<IdentityRecord>,
}

/// Half the sum of squared density jumps along the line's piecewise
/// profile, interfaces with the zero-density background included. This is
/// the exact single-line value of `-d/dR` of the 1D mass autocorrelation
/// at zero lag: each interface's overlap loss or gain is linear in the lag
/// with unit rate, once per ordering of the pair.
fn half_sq_jump_sum<T: Real>(field: &DensityField<T>, line: &Line<T>) -> T {
    let eps = field.hull().eps();
    let mut spans: Vec<(T, T, T)> = Vec::new();
    for (ivs, rho) in field.region_segments(line) {
        if rho > T::zero() {
            for &(a, b) in ivs.spans() {
                spans.push((a, b, rho));
            }
        }
    }
    if spans.is_empty() {
        return T::zero();
    }
    spans.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut total = T::zero();
    let mut prev_rho = T::zero();
    let mut prev_end = spans[0].0;
    for &(a, b, rho) in &spans {
        if a - prev_end > eps {
            // A zero-density gap: the previous region closes before the
            // next one opens.
            total += prev_rho * prev_rho;
            prev_rho = T::zero();
        }
        let step = rho - prev_rho;
        total += step * step;
        prev_rho = rho;
        prev_end = b;
    }
    total += prev_rho * prev_rho;
    total.half()
}

/// Verifies `C = 3 M^2 / (pi <l^4>)` for the mass-weighted geometry: `M`
/// analytic, `<l^4>` from the density-weighted pair-distance distribution
/// via the integration-by-parts identity `int x^4 gamma'' = 12 int x^2
/// gamma`, normalized by the slope of the mass autocorrelation at zero.
///
/// The slope is measured on invariant lines: per line the zero-lag
/// derivative of the 1D density autocorrelation is exactly half the sum
/// of squared density jumps, so averaging it over lines through the
/// bounding disc (misses counting zero) gives `|gamma_u'(0)|` without
/// differentiating a histogram. For a uniform field the constant must
/// equal `rho^2 S / 4`.
pub fn check_b3<T: Real>(
    field: &DensityField<T>,
    config: &EstimatorConfig,
) -> Result<B3Report, EstimateError> {
    let mass = field_mass(field, config);
    let v_hull = field.hull.metrics.volume.as_f64();
    let center = field.hull.metrics.bounding_center;
    let radius = field.hull.metrics.bounding_radius;
    let disc_area = std::f64::consts::PI * (radius * radius).as_f64();
    let plan = config.plan.with_role(roles::OPTICAL ^ 0xB3);

    // Per chunk: density-weighted pair sums for the moment integral and
    // jump sums over sampled lines for the slope, kept separate so the
    // final constant can be jackknifed.
    type B3Chunk<T> = (CompensatedSum<T>, u64, CompensatedSum<T>, u64);
    let chunks: Vec<Result<B3Chunk<T>, EstimateError>> = plan.run(|chunk, mut rng| {
        let quota = plan.quota(config.samples, chunk);
        let mut weight_sum = CompensatedSum::zero();
        let mut jump_sum = CompensatedSum::zero();
        for _ in 0..quota {
            let a = sample_interior_point(&mut rng, field.hull())?;
            let b = sample_interior_point(&mut rng, field.hull())?;
            let w = field.rho_at(a) * field.rho_at(b);
            if w > T::zero() {
                weight_sum.add(w);
            }
        }
        for _ in 0..quota {
            let line = sample_mu_line::<T>(&mut rng, center, radius);
            let s = half_sq_jump_sum(field, &line);
            if s > T::zero() {
                jump_sum.add(s);
            }
        }
        Ok((weight_sum, quota, jump_sum, quota))
    });
    let chunks: Vec<B3Chunk<T>> = chunks.into_iter().collect::<Result<_, _>>()?;
    let n_pairs: u64 = chunks.iter().map(|c| c.1).sum();
    let n_lines: u64 = chunks.iter().map(|c| c.3).sum();

    if mass.value <= 0.0 || n_pairs == 0 {
        return Ok(B3Report {
            mass,
            l4: 0.0,
            slope_at_zero: 0.0,
            c_mu_dot: 0.0,
            c_mu_dot_stderr: 0.0,
            uniform_reference: None,
            degenerate: true,
            n_pairs,
            n_lines,
            records: Vec::new(),
        });
    }

    // Slope at zero and second-moment integral of the unnormalized mass
    // autocorrelation, from a subset of chunks (all, or all but one).
    let evaluate = |skip: Option<usize>| -> Option<(f64, f64)> {
        let mut weight = 0.0;
        let mut jumps = 0.0;
        let mut pairs = 0u64;
        let mut lines = 0u64;
        for (i, (wsum, n_p, jsum, n_l)) in chunks.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            weight += wsum.value().as_f64();
            jumps += jsum.value().as_f64();
            pairs += n_p;
            lines += n_l;
        }
        if pairs == 0 || lines == 0 {
            return None;
        }
        // int x^2 gamma_u dx: the x^2 cancels the pair-distance kernel
        // exactly, leaving V^2 E[rho rho'] / (4 pi) -- no binning bias.
        let four_pi = 4.0 * std::f64::consts::PI;
        let int_x2_gamma = v_hull * v_hull * (weight / pairs as f64) / four_pi;
        let slope = disc_area * jumps / lines as f64;
        if slope == 0.0 || int_x2_gamma <= 0.0 {
            return None;
        }
        Some((slope, int_x2_gamma))
    };

    // The constant itself: C = 3 M^2 / (pi l4) with
    // l4 = 12 int x^2 gamma_u / slope, i.e. M^2 slope / (4 pi int).
    let constant = |slope: f64, int: f64| {
        mass.value * mass.value * slope / (4.0 * std::f64::consts::PI * int)
    };

    let Some((slope_at_zero, int_x2_gamma)) = evaluate(None) else {
        return Ok(B3Report {
            mass,
            l4: 0.0,
            slope_at_zero: 0.0,
            c_mu_dot: 0.0,
            c_mu_dot_stderr: 0.0,
            uniform_reference: None,
            degenerate: true,
            n_pairs,
            n_lines,
            records: Vec::new(),
        });
    };
    let c_full = constant(slope_at_zero, int_x2_gamma);
    let l4 = 12.0 * int_x2_gamma / slope_at_zero;
    // Delete-one-chunk jackknife for the standard error of the whole
    // histogram -> fit -> moment pipeline.
    let mut leave_outs = Vec::new();
    for i in 0..chunks.len() {
        if let Some((s, g)) = evaluate(Some(i)) {
            leave_outs.push(constant(s, g));
        }
    }
    let c_mu_dot_stderr = if leave_outs.len() >= 2 {
        let k = leave_outs.len() as f64;
        let mean = leave_outs.iter().sum::<f64>() / k;
        let ss: f64 = leave_outs.iter().map(|v| (v - mean).powi(2)).sum();
        ((k - 1.0) / k * ss).sqrt()
    } else {
        0.0
    };

    let uniform_reference = if field.is_uniform_hull() {
        let rho = field.regions()[0].rho.as_f64();
        Some(rho * rho * field.hull.metrics.surface.as_f64() / 4.0)
    } else {
        None
    };
    let mut records = Vec::new();
    if let Some(reference) = uniform_reference {
        records.push(IdentityRecord::new(
            "uniform_field_constant_eq_quarter_surface",
            c_full,
            c_mu_dot_stderr,
            reference,
            Tolerance::Relative(0.02),
        ));
    }
    Ok(B3Report {
        mass,
        l4,
        slope_at_zero,
        c_mu_dot: c_full,
        c_mu_dot_stderr,
        uniform_reference,
        degenerate: false,
        n_pairs,
        n_lines,
        records,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use crate::estimators::estimate_chords;
    use crate::sampling::SamplePlan;
    use crate::stats::chi2_two_sample;

    use super::*;

    fn config(samples: u64, seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            samples,
            n_bins: 64,
            range: None,
            plan: SamplePlan::new(seed, 8),
        }
    }

    fn unit_sphere() -> SolidSpec<f64> {
        SolidSpec::sphere(Vec3::zero(), 1.0)
    }

    /// Uniform density `rho` filling the whole unit-ball hull.
    fn uniform_ball_field(rho: f64) -> DensityField<f64> {
        DensityField::new(
            unit_sphere(),
            vec![DensityRegion {
                solid: unit_sphere(),
                rho,
            }],
        )
        .unwrap()
    }

    /// Unit density on the spherical shell `0.5 <= r <= 1`, painted as a
    /// zero-density core over a unit ball.
    fn shell_field() -> DensityField<f64> {
        DensityField::new(
            unit_sphere(),
            vec![
                DensityRegion {
                    solid: unit_sphere(),
                    rho: 1.0,
                },
                DensityRegion {
                    solid: SolidSpec::sphere(Vec3::zero(), 0.5),
                    rho: 0.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn construction_rejects_bad_fields() {
        let shell = SolidSpec::shell(Vec3::<f64>::zero(), 1.0, 0.5);
        assert!(matches!(
            DensityField::new(shell, vec![]),
            Err(FieldError::NonConvexHull)
        ));

        let negative = DensityField::new(
            unit_sphere(),
            vec![DensityRegion {
                solid: SolidSpec::sphere(Vec3::zero(), 0.5),
                rho: -1.0,
            }],
        );
        assert!(matches!(negative, Err(FieldError::BadDensity(0, d)) if d == -1.0));

        let outside = DensityField::new(
            unit_sphere(),
            vec![DensityRegion {
                solid: SolidSpec::sphere(Vec3::new(0.9, 0.0, 0.0), 0.5),
                rho: 1.0,
            }],
        );
        assert!(matches!(outside, Err(FieldError::RegionOutsideHull(0))));

        let invalid = DensityField::new(
            unit_sphere(),
            vec![DensityRegion {
                solid: SolidSpec::sphere(Vec3::zero(), -1.0),
                rho: 1.0,
            }],
        );
        assert!(matches!(invalid, Err(FieldError::BadRegion { index: 0, .. })));
    }

    #[test]
    fn hull_containment_handles_boxes_and_intersections() {
        let cube = SolidSpec::cuboid(Vec3::<f64>::zero(), Vec3::new(1.0, 1.0, 1.0));
        let centered = |radius| {
            vec![DensityRegion {
                solid: SolidSpec::sphere(Vec3::new(0.5, 0.5, 0.5), radius),
                rho: 1.0,
            }]
        };
        assert!(DensityField::new(cube.clone(), centered(0.4)).is_ok());
        assert!(matches!(
            DensityField::new(cube, centered(0.6)),
            Err(FieldError::RegionOutsideHull(0))
        ));

        // A single-member intersection hull degenerates to its member and
        // keeps closed-form metrics; a genuine two-member intersection has
        // no closed-form volume, so it is rejected as a hull.
        let inner = || {
            vec![DensityRegion {
                solid: SolidSpec::sphere(Vec3::zero(), 0.9),
                rho: 2.0,
            }]
        };
        let wrapped = SolidSpec::Intersection(vec![unit_sphere()]);
        assert!(DensityField::new(wrapped, inner()).is_ok());
        let lens = SolidSpec::Intersection(vec![
            unit_sphere(),
            SolidSpec::cuboid(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)),
        ]);
        assert!(matches!(
            DensityField::new(lens, inner()),
            Err(FieldError::Metrics(_))
        ));
    }

    #[test]
    fn parses_field_files_and_detects_uniform_hulls() {
        let json = r#"{
            "hull": {"sphere": {"center": [0, 0, 0], "radius": 1.0}},
            "regions": [
                {"solid": {"sphere": {"center": [0, 0, 0], "radius": 1.0}}, "rho": 1.0}
            ]
        }"#;
        let field: DensityField<f64> = DensityField::from_json(json).unwrap();
        assert!(field.is_uniform_hull());
        assert_eq!(field.regions().len(), 1);
        assert_eq!(field.max_rho(), 1.0);

        assert!(!shell_field().is_uniform_hull());
        assert!(DensityField::<f64>::from_json("{").is_err());
    }

    #[test]
    fn density_lookup_respects_painter_order() {
        let field = shell_field();
        assert_eq!(field.rho_at(Vec3::new(0.75, 0.0, 0.0)), 1.0);
        assert_eq!(field.rho_at(Vec3::new(0.25, 0.0, 0.0)), 0.0);
        assert_eq!(field.rho_at(Vec3::new(1.25, 0.0, 0.0)), 0.0);
        assert_eq!(field.max_rho(), 1.0);
    }

    #[test]
    fn optical_length_is_an_exact_interval_sum() {
        let ball = uniform_ball_field(1.0);
        let x = |t| Vec3::new(t, 0.0, 0.0);
        // Interior segment, full chord, and a segment overshooting the
        // body on both sides.
        assert!((optical_length(&ball, x(-0.25), x(0.25)) - 0.5).abs() < 1e-12);
        assert!((optical_length(&ball, x(-2.0), x(2.0)) - 2.0).abs() < 1e-12);
        // Doubling the density doubles every optical length.
        let dense = uniform_ball_field(2.0);
        assert!((optical_length(&dense, x(-2.0), x(2.0)) - 4.0).abs() < 1e-12);
        // The zero-density core contributes nothing on a diametral path.
        let shell = shell_field();
        assert!((optical_length(&shell, x(-1.5), x(1.5)) - 1.0).abs() < 1e-12);
        // Coincident endpoints.
        assert_eq!(optical_length(&ball, x(0.3), x(0.3)), 0.0);
    }

    #[test]
    fn optical_length_is_symmetric_and_additive() {
        let field = shell_field();
        let p = Vec3::new(-0.3, 0.2, 0.1);
        let q = Vec3::new(0.8, -0.4, 0.3);
        let m = p + (q - p) * 0.37;
        let whole = optical_length(&field, p, q);
        assert!((whole - optical_length(&field, q, p)).abs() < 1e-12);
        let split = optical_length(&field, p, m) + optical_length(&field, m, q);
        assert!((whole - split).abs() < 1e-12);
    }

    #[test]
    fn optical_radius_integrates_to_the_hull_boundary() {
        let ball = uniform_ball_field(1.0);
        let ex = Vec3::new(1.0, 0.0, 0.0);
        assert!((optical_radius(&ball, Vec3::zero(), ex) - 1.0).abs() < 1e-12);
        let off = Vec3::new(0.5, 0.0, 0.0);
        assert!((optical_radius(&ball, off, ex) - 0.5).abs() < 1e-12);
        assert!((optical_radius(&ball, off, ex * -1.0) - 1.5).abs() < 1e-12);
        // Only the occupied annulus counts for the shell field.
        let shell = shell_field();
        assert!((optical_radius(&shell, Vec3::zero(), ex) - 0.5).abs() < 1e-12);
        // A field with no mass has zero optical radius everywhere.
        let empty = uniform_ball_field(0.0);
        assert_eq!(optical_radius(&empty, Vec3::zero(), ex), 0.0);
    }

    #[test]
    fn uniform_field_optical_cld_is_the_ordinary_cld() {
        let field = uniform_ball_field(1.0);
        let mu_tilde = estimate_mu_tilde(&field, &config(40_000, 101)).unwrap();
        assert_eq!(mu_tilde.n_lines_hit, 40_000);

        // First moment must match the mean-chord identity 4V/S = 4/3.
        let (mean, se) = mu_tilde.moment(1);
        assert!(
            (mean - 4.0 / 3.0).abs() < 4.0 * se + 1e-3,
            "mean={mean} se={se}"
        );

        // Bin-by-bin agreement with an independent chord sampler.
        let body = Body::new(unit_sphere()).unwrap();
        let chords = estimate_chords(&body, &config(40_000, 102)).unwrap();
        let optical: Vec<u64> = (0..64).map(|i| mu_tilde.hist.counts_in(i).0).collect();
        let geometric: Vec<u64> = (0..64).map(|i| chords.mu_o.counts_in(i).0).collect();
        let result = chi2_two_sample(&optical, &geometric);
        assert!(
            result.p_value > 1e-3,
            "chi2={} dof={} p={}",
            result.chi2,
            result.dof,
            result.p_value
        );
    }

    #[test]
    fn shell_field_optical_cld_matches_the_shell_occupied_cld() {
        // Unit density on the annulus, zero in the core: the optical
        // length across a hull chord is exactly the occupied length of the
        // same line in the shell body, so the two distributions agree.
        let field = shell_field();
        let mu_tilde = estimate_mu_tilde(&field, &config(40_000, 103)).unwrap();
        let shell = Body::new(SolidSpec::shell(Vec3::zero(), 1.0, 0.5)).unwrap();
        let chords = estimate_chords(&shell, &config(40_000, 104)).unwrap();
        let optical: Vec<u64> = (0..64).map(|i| mu_tilde.hist.counts_in(i).0).collect();
        let occupied: Vec<u64> = (0..64).map(|i| chords.mu_o.counts_in(i).0).collect();
        let result = chi2_two_sample(&optical, &occupied);
        assert!(
            result.p_value > 1e-3,
            "chi2={} dof={} p={}",
            result.chi2,
            result.dof,
            result.p_value
        );
    }

    #[test]
    fn density_pair_functional_reproduces_quarter_surface() {
        // For a uniform unit-density ball, G = iint 1/(4 pi R^2) = S/4.
        let g = estimate_g(&uniform_ball_field(1.0), &config(80_000, 111)).unwrap();
        assert!(g.stderr > 0.0);
        assert!(
            (g.value - PI).abs() < 4.0 * g.stderr,
            "G={} +/- {}",
            g.value,
            g.stderr
        );
        assert!((g.value - PI).abs() < 0.05);

        // G is quadratic in the density; same seed, same points.
        let g2 = estimate_g(&uniform_ball_field(2.0), &config(80_000, 111)).unwrap();
        assert!((g2.value - 4.0 * g.value).abs() < 1e-9 * g.value);

        let empty = estimate_g(&uniform_ball_field(0.0), &config(1_000, 112)).unwrap();
        assert_eq!(empty.value, 0.0);
    }

    #[test]
    fn constant_test_function_makes_both_routes_coincide() {
        // With phi = 1 the radius route collapses to G and the chord route
        // to (2G/<W^2>) <W^2>/2: identical by construction, so any gap is
        // a wiring bug, not statistics.
        let phi = TestFunction::Power { p: 0, scale: 1.0 };
        let report = dirac_optical(&shell_field(), &phi, &config(30_000, 121)).unwrap();
        assert!(
            (report.lhs - report.rhs).abs() <= 1e-12 * report.lhs.abs().max(1.0),
            "lhs={} rhs={}",
            report.lhs,
            report.rhs
        );
        assert!((report.lhs - report.g).abs() <= 1e-12 * report.g.abs().max(1.0));
        assert!(report.record.pass);
    }

    #[test]
    fn optical_functional_routes_agree_on_a_uniform_ball() {
        // Uniform unit ball: the functional equals V int_0^2 gamma(l)
        // e^{-l} dl with gamma = 1 - 3l/4 + l^3/16, which evaluates to
        // V (5/8 - 9/8 e^{-2}).
        let phi = TestFunction::Exp {
            alpha: 1.0,
            scale: 1.0,
        };
        let report = dirac_optical(&uniform_ball_field(1.0), &phi, &config(60_000, 122)).unwrap();
        let volume = 4.0 * PI / 3.0;
        let reference = volume * (0.625 - 1.125 * (-2.0f64).exp());
        assert!(
            (report.lhs - reference).abs() < 4.0 * report.lhs_stderr + 1e-3,
            "lhs={} ref={reference}",
            report.lhs
        );
        assert!(
            (report.rhs - reference).abs() < 4.0 * report.rhs_stderr + 1e-3,
            "rhs={} ref={reference}",
            report.rhs
        );
        assert!(report.record.pass, "{}", report.record.summary_line());
        // The optical chord constant reduces to the geometric one, S/<l^2> =
        // pi for the unit ball.
        assert!(
            (report.c_mu_tilde - PI).abs() < 4.0 * report.c_mu_tilde_stderr + 1e-2,
            "c={} +/- {}",
            report.c_mu_tilde,
            report.c_mu_tilde_stderr
        );
    }

    #[test]
    fn optical_functional_routes_agree_on_the_shell_field() {
        let phi = TestFunction::Exp {
            alpha: 1.0,
            scale: 1.0,
        };
        let report = dirac_optical(&shell_field(), &phi, &config(60_000, 123)).unwrap();
        assert!(report.record.pass, "{}", report.record.summary_line());
        assert!(report.n_radii == 60_000 && report.n_chords == 60_000);
    }

    #[test]
    fn field_mass_prefers_closed_forms() {
        // Painted shell: effective solid of the outer region is the
        // concentric difference, which has an exact volume 7 pi / 6.
        let mass = field_mass(&shell_field(), &config(1_000, 131));
        assert!(mass.analytic);
        assert_eq!(mass.stderr, 0.0);
        assert!((mass.value - 7.0 * PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn field_mass_falls_back_to_sampling_for_awkward_overlaps() {
        // Two overlapping unit balls of unit density: the painted mass is
        // the volume of their union, 2V - V_lens.
        let field = DensityField::new(
            SolidSpec::sphere(Vec3::zero(), 2.0),
            vec![
                DensityRegion {
                    solid: unit_sphere(),
                    rho: 1.0,
                },
                DensityRegion {
                    solid: SolidSpec::sphere(Vec3::new(0.5, 0.0, 0.0), 1.0),
                    rho: 1.0,
                },
            ],
        )
        .unwrap();
        let mass = field_mass(&field, &config(200_000, 132));
        assert!(!mass.analytic);
        assert!(mass.stderr > 0.0);
        let lens = PI * (4.0 + 0.5) * (2.0 - 0.5) * (2.0 - 0.5) / 12.0;
        let union = 2.0 * (4.0 * PI / 3.0) - lens;
        assert!(
            (mass.value - union).abs() < 5.0 * mass.stderr,
            "mass={} +/- {} expected {union}",
            mass.value,
            mass.stderr
        );
    }

    #[test]
    fn uniform_ball_constant_matches_quarter_surface() {
        // Every line through the tight bounding disc crosses the ball with
        // jump sum one, and every pair has unit weight, so slope, moment,
        // and constant are all exact to rounding here.
        let report = check_b3(&uniform_ball_field(1.0), &config(50_000, 141)).unwrap();
        assert!(!report.degenerate);
        assert!(report.mass.analytic);
        assert!((report.mass.value - 4.0 * PI / 3.0).abs() < 1e-12);
        assert_eq!(report.uniform_reference, Some(PI));
        assert!(
            (report.c_mu_dot - PI).abs() < 1e-12,
            "C={} +/- {}",
            report.c_mu_dot,
            report.c_mu_dot_stderr
        );
        assert!(report.c_mu_dot_stderr < 1e-12);
        assert!(report.records[0].pass, "{}", report.records[0].summary_line());
        // l4 = 12 int x^2 gamma / slope recovers <l^4> = 16/3 and the
        // slope the exact S/4 = pi.
        assert!((report.l4 - 16.0 / 3.0).abs() < 1e-12, "l4={}", report.l4);
        assert!(
            (report.slope_at_zero - PI).abs() < 1e-12,
            "slope={}",
            report.slope_at_zero
        );
    }

    #[test]
    fn shell_field_constant_matches_its_interface_area() {
        // For the painted shell the autocorrelation slope is a quarter of
        // the squared-jump-weighted interface area: (4 pi + pi) / 4. The
        // constant approaches it because the pair moment approaches
        // M^2 / (4 pi); <l^4> then equals 3 M^2 / (pi C) = 49/15.
        let report = check_b3(&shell_field(), &config(150_000, 144)).unwrap();
        assert!(!report.degenerate);
        assert!(report.uniform_reference.is_none());
        assert!(report.records.is_empty());
        assert!((report.mass.value - 7.0 * PI / 6.0).abs() < 1e-12);
        let slope_ref = 5.0 * PI / 4.0;
        assert!(
            (report.slope_at_zero - slope_ref).abs() < 0.01 * slope_ref,
            "slope={}",
            report.slope_at_zero
        );
        assert!(
            (report.c_mu_dot - slope_ref).abs()
                < 4.0 * report.c_mu_dot_stderr + 0.01 * slope_ref,
            "C={} +/- {}",
            report.c_mu_dot,
            report.c_mu_dot_stderr
        );
        let l4_ref = 49.0 / 15.0;
        assert!(
            (report.l4 - l4_ref).abs() < 0.02 * l4_ref,
            "l4={}",
            report.l4
        );
    }

    #[test]
    fn constant_scales_with_the_square_of_the_density() {
        // Doubling rho multiplies M by 2 and the autocorrelation by 4;
        // the constant must scale by exactly 4 with shared sample points.
        let base = check_b3(&uniform_ball_field(1.0), &config(40_000, 142)).unwrap();
        let dense = check_b3(&uniform_ball_field(2.0), &config(40_000, 142)).unwrap();
        assert!(!base.degenerate && !dense.degenerate);
        assert!(
            (dense.c_mu_dot - 4.0 * base.c_mu_dot).abs() < 1e-9 * base.c_mu_dot,
            "base={} dense={}",
            base.c_mu_dot,
            dense.c_mu_dot
        );
        assert!((dense.l4 - base.l4).abs() < 1e-9 * base.l4);
    }

    #[test]
    fn massless_fields_are_reported_as_degenerate() {
        let report = check_b3(&uniform_ball_field(0.0), &config(1_000, 143)).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.mass.value, 0.0);
        assert!(report.records.is_empty());
    }
}
