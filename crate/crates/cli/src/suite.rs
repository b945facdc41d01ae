//! The aggregated identity suite: every integral identity the estimators
//! verify for a single body, collected into one report.
//!
//! The suite covers the signed chord-length density (normalization, Cauchy
//! mean, fourth-moment relation, and the empirical normalizer it implies),
//! the signed radius density (normalization, crossing balance, and the
//! occupied-length telescoping identity), the occupied/signed moment ratios
//! pinned by the surface ratio `S/S*`, the interior-point and pair-weighted
//! chord resampling relations for convex bodies, and the functional
//! cross-checks between the autocorrelation, radius, chord, and pair routes.

use std::f64::consts::PI;

use chordmc::dirac::{
    cross_check, dirac_chords, dirac_gamma, dirac_pairs, dirac_radii, DiracError, TestFunction,
};
use chordmc::estimators::{
    check_randomness_relations, estimate_chords, estimate_distances, estimate_radii,
    EstimateError, EstimatorConfig,
};
use chordmc::geometry::Body;
use chordmc::report::{IdentityRecord, IdentityReport};

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
}

/// Ratio of two measured quantities with first-order error propagation.
fn ratio_with_stderr(num: (f64, f64), den: (f64, f64)) -> (f64, f64) {
    let (a, sa) = num;
    let (b, sb) = den;
    let r = a / b;
    let rel = ((sa / a).powi(2) + (sb / b).powi(2)).sqrt();
    (r, (r * rel).abs())
}

/// Runs every applicable identity check against `body` and returns one
/// record per identity. Statistical comparisons use `sigma` standard
/// errors; identities that hold by construction are checked to rounding.
pub fn identity_suite(
    body: &Body<f64>,
    config: &EstimatorConfig,
    sigma: f64,
) -> Result<IdentityReport, SuiteError> {
    let mut report = IdentityReport::new();
    let volume = body.metrics.volume;
    let surface = body.metrics.surface;
    let cauchy = body.metrics.mean_chord_cauchy();
    let s_star = body.metrics.hull_surface.unwrap_or(surface);
    let surface_ratio = surface / s_star;

    // Signed chord-length density. The decomposition guarantees that the
    // net charge of every line's events equals its in-body interval count,
    // so the accumulated signed charge must match the integer event
    // imbalance and the normalized signed density integrates to one.
    let chords = estimate_chords(body, config)?;
    let interval_count =
        chords.mu_pm.total_counts().0 as f64 - chords.mu_pm.total_counts().1 as f64;
    report.push(IdentityRecord::exact(
        "signed_chord_density_normalization",
        chords.total_charge() / interval_count,
        1.0,
    ));
    let (m1, s1) = chords.signed_moment(1);
    report.push(IdentityRecord::sigma(
        "signed_chord_mean_eq_cauchy_mean",
        m1,
        s1,
        cauchy,
        sigma,
    ));
    let (m4, s4) = chords.signed_moment(4);
    report.push(IdentityRecord::sigma(
        "signed_chord_fourth_moment_eq_12v2_over_pi_s",
        m4,
        s4,
        12.0 * volume * volume / (PI * surface),
        sigma,
    ));
    report.push(IdentityRecord::sigma(
        "empirical_chord_normalizer_eq_cauchy_mean",
        PI * m4 / (3.0 * volume),
        PI * s4 / (3.0 * volume),
        cauchy,
        sigma,
    ));

    // Occupied chords against the convex-hull surface.
    let (mult, mult_se) = chords.multiplicity_ratio();
    report.push(IdentityRecord::sigma(
        "chord_multiplicity_eq_surface_ratio",
        mult,
        mult_se,
        surface_ratio,
        sigma,
    ));
    let occupied_mean = chords.occupied_moment(1);
    report.push(IdentityRecord::sigma(
        "occupied_chord_mean_eq_hull_cauchy_mean",
        occupied_mean.0,
        occupied_mean.1,
        4.0 * volume / s_star,
        sigma,
    ));
    let (r1, r1_se) = ratio_with_stderr(occupied_mean, (m1, s1));
    report.push(IdentityRecord::sigma(
        "occupied_to_signed_mean_ratio_eq_surface_ratio",
        r1,
        r1_se,
        surface_ratio,
        sigma,
    ));
    let (r2, r2_se) = ratio_with_stderr(chords.occupied_moment(2), chords.signed_moment(2));
    report.push(IdentityRecord::sigma(
        "occupied_to_signed_second_moment_ratio_eq_surface_ratio",
        r2,
        r2_se,
        surface_ratio,
        sigma,
    ));

    // Signed radius density.
    let radii = estimate_radii(body, config)?;
    report.push(IdentityRecord::exact(
        "signed_radius_density_normalization",
        radii.signed_moment(0).0,
        1.0,
    ));
    let beyond_first_plus = radii.iota_plus.n_events() - radii.n_rays;
    report.push(IdentityRecord::exact(
        "radius_crossing_balance_beyond_first",
        beyond_first_plus as f64,
        radii.iota_minus.n_events() as f64,
    ));
    report.push(IdentityRecord::exact(
        "signed_radius_mean_eq_occupied_ray_mean",
        radii.signed_moment(1).0,
        radii.mean_occupied().0,
    ));

    // Interior-point and pair-weighted chord resampling relations (defined
    // for bodies convex by construction; silently inapplicable otherwise).
    match check_randomness_relations(body, config) {
        Ok(rel) => report.extend(rel.records),
        Err(EstimateError::NonConvexUnsupported) => {}
        Err(e) => return Err(e.into()),
    }

    // Functional cross-checks: three routes for a decaying test function,
    // then volume recovery through all four routes.
    let distances = estimate_distances(body, config)?;
    let table = distances.gamma_table()?;
    let phi = TestFunction::Exp {
        alpha: 1.0,
        scale: 1.0,
    };
    let routes = [
        dirac_gamma(&table, &phi),
        dirac_radii(body, &phi, config)?,
        dirac_chords(body, &phi, config)?,
    ];
    report.extend(cross_check(&routes, sigma));
    let kernel = TestFunction::volume_kernel();
    let volume_routes = [
        dirac_gamma(&table, &kernel),
        dirac_radii(body, &kernel, config)?,
        dirac_chords(body, &kernel, config)?,
        dirac_pairs(body, &kernel, config)?,
    ];
    for est in volume_routes {
        report.push(IdentityRecord::sigma(
            format!("dirac_volume_recovery_{}", est.method.name()),
            est.value,
            est.stderr,
            volume,
            sigma,
        ));
    }

    Ok(report)
}
