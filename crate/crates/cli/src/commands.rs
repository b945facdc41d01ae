//! One function per subcommand. Every command prints its primary artifact
//! to stdout and, when `--out DIR` is given, writes the full file set into
//! that directory. Commands that run identity checks report `Ok(false)`
//! when any check fails; plain sampling commands always report `Ok(true)`.

use std::error::Error;
use std::path::{Path, PathBuf};

use chordmc::dirac::{
    cross_check, dirac_chords_with, dirac_gamma, dirac_pairs, dirac_radii, ChordNormalization,
    DiracEstimate, DiracMethod, TestFunction,
};
use chordmc::estimators::{
    estimate_chords, estimate_distances, estimate_radii, signed_cld_from_gamma, GammaTable,
};
use chordmc::geometry::Body;
use chordmc::nonuniform::{check_b3, dirac_optical, estimate_mu_tilde, DensityField};
use chordmc::paths::{kink_pair_check, mean_path_report, walk_identity_records, KinkReport};
use chordmc::report::{json_f64, records_json_array, IdentityRecord};
use chordmc::signedhist::fmt_sig9;

use crate::{Command, RunOptions};

type CmdResult = Result<bool, Box<dyn Error>>;

pub fn dispatch(command: &Command, opts: &RunOptions) -> CmdResult {
    match command {
        Command::Describe { body } => describe(body, opts),
        Command::SampleChords { body } => sample_chords(body, opts),
        Command::SampleRadii { body } => sample_radii(body, opts),
        Command::SampleDistances { body } => sample_distances(body, opts),
        Command::SignedCld { body, window } => signed_cld(body, *window, opts),
        Command::Dirac {
            body,
            phi,
            methods,
            norm,
        } => dirac(body, phi, methods, norm, opts),
        Command::Optical { field, phi } => optical(field, phi, opts),
        Command::Walk { body, mfp, kinks } => walk(body, mfp, *kinks, opts),
        Command::Identities { body } => identities(body, opts),
    }
}

fn load_body(path: &Path) -> Result<Body<f64>, Box<dyn Error>> {
    Ok(Body::<f64>::from_path(path)?)
}

/// Writes `contents` as `name` inside `--out` (creating the directory),
/// or does nothing when no output directory was requested.
fn write_out(opts: &RunOptions, name: &str, contents: &str) -> Result<(), Box<dyn Error>> {
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

/// Deterministic JSON object builder: two-space indent, fields in
/// insertion order, floats at 17 significant digits.
struct JsonFields(Vec<String>);

impl JsonFields {
    fn new() -> Self {
        JsonFields(Vec::new())
    }
    fn raw(&mut self, fragment: String) {
        self.0.push(fragment);
    }
    fn f(&mut self, key: &str, x: f64) {
        self.0.push(format!("  {key:?}: {}", json_f64(x)));
    }
    fn u(&mut self, key: &str, x: u64) {
        self.0.push(format!("  {key:?}: {x}"));
    }
    fn b(&mut self, key: &str, x: bool) {
        self.0.push(format!("  {key:?}: {x}"));
    }
    fn s(&mut self, key: &str, value: &str) {
        self.0.push(format!("  {key:?}: {value:?}"));
    }
    fn pair(&mut self, key: &str, value_stderr: (f64, f64)) {
        self.f(key, value_stderr.0);
        self.f(&format!("{key}_stderr"), value_stderr.1);
    }
    fn finish(self) -> String {
        format!("{{\n{}\n}}\n", self.0.join(",\n"))
    }
}

fn estimates_json(estimates: &[DiracEstimate]) -> String {
    let rows: Vec<String> = estimates
        .iter()
        .map(|e| {
            format!(
                "    {{\"method\": {:?}, \"value\": {}, \"stderr\": {}, \"n_samples\": {}}}",
                e.method.name(),
                json_f64(e.value),
                json_f64(e.stderr),
                e.n_samples
            )
        })
        .collect();
    format!("  \"estimates\": [\n{}\n  ]", rows.join(",\n"))
}

fn print_records(records: &[IdentityRecord]) {
    for r in records {
        eprintln!("{}", r.summary_line());
    }
}

// --- describe ---------------------------------------------------------

fn describe(body_path: &Path, opts: &RunOptions) -> CmdResult {
    let body = load_body(body_path)?;
    let m = &body.metrics;
    let mut out = String::new();
    out.push_str(&format!("V={:.5}\n", m.volume));
    out.push_str(&format!("S={:.5}\n", m.surface));
    out.push_str(&format!("<l>_Cauchy={:.5}\n", m.mean_chord_cauchy()));
    if let Some(s_hull) = m.hull_surface {
        out.push_str(&format!("S_hull={s_hull:.5}\n"));
        out.push_str(&format!("c_M={:.5}\n", m.surface / s_hull));
        out.push_str(&format!("<l>_O={:.5}\n", 4.0 * m.volume / s_hull));
    }
    out.push_str(&format!("bounding_radius={:.5}\n", m.bounding_radius));
    out.push_str(&format!("diameter={:.5}\n", m.diameter()));
    out.push_str(&format!(
        "convex_by_construction={}\n",
        body.is_convex_by_construction()
    ));
    print!("{out}");
    write_out(opts, "describe.txt", &out)?;
    Ok(true)
}

// --- sample-chords ----------------------------------------------------

fn sample_chords(body_path: &Path, opts: &RunOptions) -> CmdResult {
    let body = load_body(body_path)?;
    let config = opts.config();
    let est = estimate_chords(&body, &config)?;
    let seed = opts.seed;

    let primary = est.mu_pm.to_csv(est.mu_pm.total_charge(), seed)?;
    print!("{primary}");
    write_out(opts, "mu_pm.csv", &primary)?;
    write_out(
        opts,
        "mu_first.csv",
        &est.mu_1.to_csv(est.mu_1.total_charge(), seed)?,
    )?;
    write_out(
        opts,
        "mu_plus.csv",
        &est.mu_plus.to_csv(est.mu_plus.total_charge(), seed)?,
    )?;
    write_out(
        opts,
        "mu_minus.csv",
        &est.mu_minus.to_csv(est.mu_minus.total_charge(), seed)?,
    )?;
    write_out(
        opts,
        "mu_occupied.csv",
        &est.mu_o.to_csv(est.mu_o.total_charge(), seed)?,
    )?;

    let mut j = JsonFields::new();
    j.u("n_lines_hit", est.n_lines_hit);
    j.u("n_lines_sampled", est.n_lines_sampled);
    j.f("hit_fraction", est.hit_fraction());
    j.f("total_charge", est.total_charge());
    j.pair("multiplicity_ratio", est.multiplicity_ratio());
    j.pair("mean_signed", est.signed_moment(1));
    j.pair("m2_signed", est.signed_moment(2));
    j.pair("m3_signed", est.signed_moment(3));
    j.pair("m4_signed", est.signed_moment(4));
    j.pair("mean_occupied", est.occupied_moment(1));
    j.pair("m2_occupied", est.occupied_moment(2));
    j.f("cauchy_mean_4v_over_s", body.metrics.mean_chord_cauchy());
    j.u("seed", seed);
    write_out(opts, "chord_moments.json", &j.finish())?;
    Ok(true)
}

// --- sample-radii -----------------------------------------------------

fn sample_radii(body_path: &Path, opts: &RunOptions) -> CmdResult {
    let body = load_body(body_path)?;
    let config = opts.config();
    let est = estimate_radii(&body, &config)?;
    let seed = opts.seed;

    let primary = est.iota_pm.to_csv(est.iota_pm.total_charge(), seed)?;
    print!("{primary}");
    write_out(opts, "iota_pm.csv", &primary)?;
    write_out(
        opts,
        "iota_first.csv",
        &est.iota_1.to_csv(est.iota_1.total_charge(), seed)?,
    )?;
    write_out(
        opts,
        "iota_plus.csv",
        &est.iota_plus.to_csv(est.iota_plus.total_charge(), seed)?,
    )?;
    write_out(
        opts,
        "iota_minus.csv",
        &est.iota_minus.to_csv(est.iota_minus.total_charge(), seed)?,
    )?;
    write_out(
        opts,
        "iota_occupied.csv",
        &est.iota_o.to_csv(est.iota_o.total_charge(), seed)?,
    )?;

    let mut j = JsonFields::new();
    j.u("n_rays", est.n_rays);
    j.u("n_degenerate", est.n_degenerate);
    j.pair("mean_signed", est.signed_moment(1));
    j.pair("mean_first", est.mean_first_radius());
    j.pair("mean_occupied", est.mean_occupied());
    j.u("n_plus_events", est.iota_plus.n_events());
    j.u("n_minus_events", est.iota_minus.n_events());
    j.u("seed", seed);
    write_out(opts, "radius_moments.json", &j.finish())?;
    Ok(true)
}

// --- sample-distances -------------------------------------------------

fn gamma_csv(table: &GammaTable<f64>, seed: u64) -> String {
    let mut out = String::from("bin_lo,bin_hi,gamma,stderr\n");
    for i in 0..table.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig9(table.width * i as f64),
            fmt_sig9(table.width * (i + 1) as f64),
            fmt_sig9(table.gamma[i]),
            fmt_sig9(table.stderr[i]),
        ));
    }
    out.push_str(&format!("# seed={seed}\n"));
    out
}

fn sample_distances(body_path: &Path, opts: &RunOptions) -> CmdResult {
    let body = load_body(body_path)?;
    let config = opts.config();
    let est = estimate_distances(&body, &config)?;
    let seed = opts.seed;

    let primary = est.eta.to_csv(est.eta.total_charge(), seed)?;
    print!("{primary}");
    write_out(opts, "eta.csv", &primary)?;
    let table = est.gamma_table()?;
    write_out(opts, "gamma.csv", &gamma_csv(&table, seed))?;

    let mut j = JsonFields::new();
    j.u("n_pairs", est.n_pairs);
    j.pair("mean_distance", est.mean_distance());
    j.pair("m2", est.moment(2));
    j.pair("m3", est.moment(3));
    j.pair("m4", est.moment(4));
    j.f("volume", est.volume);
    j.u("seed", seed);
    write_out(opts, "distance_moments.json", &j.finish())?;
    Ok(true)
}

// --- signed-cld -------------------------------------------------------

fn signed_cld(body_path: &Path, window: usize, opts: &RunOptions) -> CmdResult {
    let body = load_body(body_path)?;
    let config = opts.config();
    let est = estimate_distances(&body, &config)?;
    let table = est.gamma_table()?;
    let cld = signed_cld_from_gamma(&table, window)?;

    let mut out = String::from("bin_lo,bin_hi,density,stderr\n");
    for i in 0..cld.density.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig9(cld.width * i as f64),
            fmt_sig9(cld.width * (i + 1) as f64),
            fmt_sig9(cld.density[i]),
            fmt_sig9(cld.stderr[i]),
        ));
    }
    out.push_str(&format!("# gamma_intercept0={}\n", fmt_sig9(cld.gamma_intercept0)));
    out.push_str(&format!("# gamma_slope0={}\n", fmt_sig9(cld.gamma_slope0)));
    out.push_str(&format!(
        "# gamma_slope0_stderr={}\n",
        fmt_sig9(cld.gamma_slope0_stderr)
    ));
    out.push_str(&format!("# window={window}\n"));
    out.push_str(&format!("# seed={}\n", opts.seed));
    print!("{out}");
    write_out(opts, "signed_cld.csv", &out)?;
    write_out(opts, "gamma.csv", &gamma_csv(&table, opts.seed))?;
    Ok(true)
}

// --- dirac ------------------------------------------------------------

fn parse_methods(spec: &str) -> Result<Vec<DiracMethod>, String> {
    let mut methods = Vec::new();
    for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let method = match token {
            "gamma" => DiracMethod::Gamma,
            "radii" => DiracMethod::Radii,
            "chords" => DiracMethod::Chords,
            "pairs" => DiracMethod::Pairs,
            other => {
                return Err(format!(
                    "unknown method {other:?}; expected gamma, radii, chords, or pairs"
                ))
            }
        };
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    if methods.is_empty() {
        return Err("no methods requested".to_string());
    }
    Ok(methods)
}

fn dirac(
    body_path: &Path,
    phi_spec: &str,
    methods_spec: &str,
    norm_spec: &str,
    opts: &RunOptions,
) -> CmdResult {
    let body = load_body(body_path)?;
    let phi: TestFunction<f64> = TestFunction::parse(phi_spec)?;
    let methods = parse_methods(methods_spec)?;
    let norm = match norm_spec {
        "cauchy" => ChordNormalization::CauchyMean,
        "empirical" => ChordNormalization::EmpiricalFourthMoment,
        other => {
            return Err(format!("unknown normalization {other:?}; expected cauchy or empirical").into())
        }
    };
    let config = opts.config();

    let mut estimates = Vec::new();
    for method in &methods {
        let est = match method {
            DiracMethod::Gamma => {
                let table = estimate_distances(&body, &config)?.gamma_table()?;
                dirac_gamma(&table, &phi)
            }
            DiracMethod::Radii => dirac_radii(&body, &phi, &config)?,
            DiracMethod::Chords => dirac_chords_with(&body, &phi, &config, norm)?,
            DiracMethod::Pairs => dirac_pairs(&body, &phi, &config)?,
        };
        estimates.push(est);
    }
    let records = cross_check(&estimates, opts.sigma);
    print_records(&records);

    let mut j = JsonFields::new();
    j.s("phi", &phi.describe());
    j.s("normalization", norm.describe());
    j.raw(estimates_json(&estimates));
    j.raw(records_json_array(&records, 1));
    j.b("all_pass", records.iter().all(|r| r.pass));
    let json = j.finish();
    print!("{json}");
    write_out(opts, "dirac.json", &json)?;
    Ok(records.iter().all(|r| r.pass))
}

// --- optical ----------------------------------------------------------

fn optical(field_path: &Path, phi_spec: &str, opts: &RunOptions) -> CmdResult {
    let field = DensityField::<f64>::from_path(field_path)?;
    let phi: TestFunction<f64> = TestFunction::parse(phi_spec)?;
    let config = opts.config();

    let mu_tilde = estimate_mu_tilde(&field, &config)?;
    let functional = dirac_optical(&field, &phi, &config)?;
    let b3 = check_b3(&field, &config)?;

    let mut records = vec![functional.record.clone()];
    records.extend(b3.records.iter().cloned());
    print_records(&records);
    let all_pass = records.iter().all(|r| r.pass);

    let mut j = JsonFields::new();
    j.s("phi", &phi.describe());
    j.u("n_lines_hit", mu_tilde.n_lines_hit);
    j.u("n_lines_sampled", mu_tilde.n_lines_sampled);
    j.pair("mean_optical", mu_tilde.moment(1));
    j.pair("m2_optical", mu_tilde.moment(2));
    j.f("g", functional.g);
    j.f("g_stderr", functional.g_stderr);
    j.f("c_mu_tilde", functional.c_mu_tilde);
    j.f("c_mu_tilde_stderr", functional.c_mu_tilde_stderr);
    j.f("functional_radii_route", functional.lhs);
    j.f("functional_radii_route_stderr", functional.lhs_stderr);
    j.f("functional_chords_route", functional.rhs);
    j.f("functional_chords_route_stderr", functional.rhs_stderr);
    j.f("mass", b3.mass.value);
    j.f("mass_stderr", b3.mass.stderr);
    j.b("mass_analytic", b3.mass.analytic);
    j.f("c_mu_dot", b3.c_mu_dot);
    j.f("c_mu_dot_stderr", b3.c_mu_dot_stderr);
    j.f("l4_optical", b3.l4);
    j.f("slope_at_zero", b3.slope_at_zero);
    j.b("degenerate", b3.degenerate);
    j.raw(records_json_array(&records, 1));
    j.b("all_pass", all_pass);
    let json = j.finish();
    print!("{json}");
    write_out(opts, "optical.json", &json)?;
    write_out(
        opts,
        "mu_tilde.csv",
        &mu_tilde
            .hist
            .to_csv(mu_tilde.hist.total_charge(), opts.seed)?,
    )?;
    Ok(all_pass)
}

// --- walk -------------------------------------------------------------

const DEFAULT_MFP_SWEEP: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

fn walk(body_path: &Path, mfp: &[f64], kinks: u64, opts: &RunOptions) -> CmdResult {
    let body = load_body(body_path)?;
    let sweep: Vec<f64> = if mfp.is_empty() {
        DEFAULT_MFP_SWEEP.to_vec()
    } else {
        mfp.to_vec()
    };
    for &lambda in &sweep {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(format!("--mfp must be positive and finite, got {lambda}").into());
        }
    }
    let summaries = mean_path_report(&body, &sweep, opts.samples, opts.plan())?;
    let records = walk_identity_records(&body, &summaries, opts.sigma);
    print_records(&records);

    let kink: Option<KinkReport> = if kinks > 0 {
        Some(kink_pair_check(&body, kinks, opts.plan())?)
    } else {
        None
    };

    let mut out = String::from(
        "mean_free_path,mean_in_body,stderr,n_walks,n_truncated,mean_scatters,cauchy_reference,z,pass\n",
    );
    for (summary, record) in summaries.iter().zip(&records) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_sig9(summary.mean_free_path),
            fmt_sig9(summary.mean_in_body),
            fmt_sig9(summary.stderr),
            summary.n_walks,
            summary.n_truncated,
            fmt_sig9(summary.mean_scatters),
            fmt_sig9(record.reference),
            fmt_sig9(record.z),
            record.pass,
        ));
    }
    if let Some(k) = &kink {
        out.push_str(&format!("# kink_pairs={}\n", k.n_checked));
        out.push_str(&format!(
            "# kink_max_relative_residual={}\n",
            fmt_sig9(k.max_relative_residual)
        ));
        out.push_str(&format!("# kink_pass={}\n", k.pass));
        eprintln!(
            "{} kink pairing on {} instances, max residual {}",
            if k.pass { "PASS" } else { "FAIL" },
            k.n_checked,
            fmt_sig9(k.max_relative_residual)
        );
    }
    out.push_str(&format!("# seed={}\n", opts.seed));
    print!("{out}");
    write_out(opts, "walks.csv", &out)?;

    let mut j = JsonFields::new();
    j.raw(records_json_array(&records, 1));
    if let Some(k) = &kink {
        j.u("kink_pairs", k.n_checked);
        j.f("kink_max_relative_residual", k.max_relative_residual);
        j.b("kink_pass", k.pass);
    }
    let all_pass = records.iter().all(|r| r.pass) && kink.as_ref().is_none_or(|k| k.pass);
    j.b("all_pass", all_pass);
    write_out(opts, "walk_report.json", &j.finish())?;
    Ok(all_pass)
}

// --- identities -------------------------------------------------------

fn identities(body_path: &Path, opts: &RunOptions) -> CmdResult {
    let body = load_body(body_path)?;
    let config = opts.config();
    let report = crate::suite::identity_suite(&body, &config, opts.sigma)?;
    print_records(&report.records);
    let json = report.to_json();
    print!("{json}");
    write_out(opts, "identities.json", &json)?;
    Ok(report.all_pass())
}

// Keep the unused-import lint honest about PathBuf (used in Command).
#[allow(unused)]
fn _type_uses(_: &PathBuf) {}
