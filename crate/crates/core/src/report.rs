//! Pass/fail records for the integral identities the estimators verify,
//! with a deterministic JSON rendering.

use crate::signedhist::fmt_sig17;

/// Absolute agreement floor: statistical comparisons never fail on a
/// discrepancy below this, and exact identities must hold to within it
/// (scaled by the reference magnitude).
pub const ABS_FLOOR: f64 = 1e-12;

/// How a measured value is compared against its reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerance {
    /// `|value - reference| <= mult * stderr`, with the absolute floor.
    Sigma { mult: f64 },
    /// `|value - reference| <= rel * max(|reference|, floor)`.
    Relative(f64),
    /// `|value - reference| <= floor * max(1, |reference|)`; for
    /// identities that hold to rounding error by construction.
    Exact,
}

impl Tolerance {
    pub fn describe(&self) -> String {
        match self {
            Tolerance::Sigma { mult } => format!("{mult} sigma"),
            Tolerance::Relative(rel) => format!("rel {rel:e}"),
            Tolerance::Exact => "exact".to_string(),
        }
    }
}

/// One verified identity: a measured value, its uncertainty, the reference
/// it must reproduce, and the verdict.
#[derive(Clone, Debug)]
pub struct IdentityRecord {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub reference: f64,
    pub tolerance: Tolerance,
    /// Discrepancy in units of stderr (0 when stderr is 0 and the values
    /// agree to the floor).
    pub z: f64,
    pub pass: bool,
}

impl IdentityRecord {
    pub fn new(
        name: impl Into<String>,
        value: f64,
        stderr: f64,
        reference: f64,
        tolerance: Tolerance,
    ) -> Self {
        let diff = (value - reference).abs();
        let pass = match tolerance {
            Tolerance::Sigma { mult } => diff <= mult * stderr + ABS_FLOOR,
            Tolerance::Relative(rel) => diff <= rel * reference.abs().max(ABS_FLOOR),
            Tolerance::Exact => diff <= ABS_FLOOR * reference.abs().max(1.0),
        };
        let z = if stderr > 0.0 {
            (value - reference) / stderr
        } else if diff <= ABS_FLOOR {
            0.0
        } else {
            f64::INFINITY.copysign(value - reference)
        };
        IdentityRecord {
            name: name.into(),
            value,
            stderr,
            reference,
            tolerance,
            z,
            pass,
        }
    }

    /// Statistical comparison at `mult` standard errors.
    pub fn sigma(
        name: impl Into<String>,
        value: f64,
        stderr: f64,
        reference: f64,
        mult: f64,
    ) -> Self {
        Self::new(name, value, stderr, reference, Tolerance::Sigma { mult })
    }

    /// Identity that holds to rounding error by construction.
    pub fn exact(name: impl Into<String>, value: f64, reference: f64) -> Self {
        Self::new(name, value, 0.0, reference, Tolerance::Exact)
    }

    /// One record as a deterministic single-line JSON object.
    pub fn to_json_object(&self) -> String {
        format!(
            "{{\"name\": {:?}, \"value\": {}, \"stderr\": {}, \"reference\": {}, \"z\": {}, \"tolerance\": {:?}, \"pass\": {}}}",
            self.name,
            json_f64(self.value),
            json_f64(self.stderr),
            json_f64(self.reference),
            json_f64(self.z),
            self.tolerance.describe(),
            self.pass,
        )
    }

    /// One human-readable verdict line.
    pub fn summary_line(&self) -> String {
        format!(
            "{} {:<40} value={} ref={} stderr={} z={:+.2} ({})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            fmt_sig17(self.value),
            fmt_sig17(self.reference),
            fmt_sig17(self.stderr),
            self.z,
            self.tolerance.describe(),
        )
    }
}

/// Ordered collection of identity verdicts.
#[derive(Clone, Debug, Default)]
pub struct IdentityReport {
    pub records: Vec<IdentityRecord>,
}

impl IdentityReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: IdentityRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = IdentityRecord>) {
        self.records.extend(records);
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.summary_line());
            out.push('\n');
        }
        out
    }

    /// Deterministic JSON: records in insertion order, floats at 17
    /// significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        out.push_str(&records_json_array(&self.records, 1));
        out.push_str(",\n");
        out.push_str(&format!("  \"all_pass\": {}\n", self.all_pass()));
        out.push_str("}\n");
        out
    }
}

/// `"identities": [...]` fragment at the given indent level (two spaces per
/// level), shared by every JSON report that embeds identity records.
pub fn records_json_array(records: &[IdentityRecord], indent: usize) -> String {
    let pad = "  ".repeat(indent);
    let mut out = format!("{pad}\"identities\": [\n");
    for (i, r) in records.iter().enumerate() {
        out.push_str(&pad);
        out.push_str("  ");
        out.push_str(&r.to_json_object());
        if i + 1 < records.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str(&format!("{pad}]"));
    out
}

/// JSON float token: 17 significant digits, `null` for non-finite values.
pub fn json_f64(x: f64) -> String {
    if x.is_finite() {
        fmt_sig17(x)
    } else {
        "null".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_passes_within_and_fails_beyond() {
        let ok = IdentityRecord::sigma("a", 1.002, 0.001, 1.0, 4.0);
        assert!(ok.pass);
        assert!((ok.z - 2.0).abs() < 1e-9);
        let bad = IdentityRecord::sigma("b", 1.02, 0.001, 1.0, 4.0);
        assert!(!bad.pass);
    }

    #[test]
    fn zero_stderr_agreement_uses_floor() {
        let ok = IdentityRecord::sigma("exact agree", 1.0 + 1e-13, 0.0, 1.0, 4.0);
        assert!(ok.pass);
        assert_eq!(ok.z, 0.0);
        let bad = IdentityRecord::sigma("exact disagree", 1.1, 0.0, 1.0, 4.0);
        assert!(!bad.pass);
        assert!(bad.z.is_infinite() && bad.z > 0.0);
    }

    #[test]
    fn exact_tolerance_scales_with_reference() {
        assert!(IdentityRecord::exact("big", 1e6 + 1e-7, 1e6).pass);
        assert!(!IdentityRecord::exact("big off", 1e6 + 1e-4, 1e6).pass);
        assert!(IdentityRecord::exact("small", 1e-13, 0.0).pass);
    }

    #[test]
    fn json_is_well_formed_and_ordered() {
        let mut rep = IdentityReport::new();
        rep.push(IdentityRecord::sigma("first", 1.0, 0.1, 1.0, 4.0));
        rep.push(IdentityRecord::exact("second", 2.0, 2.0));
        let json = rep.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["identities"][0]["name"], "first");
        assert_eq!(v["identities"][1]["name"], "second");
        assert_eq!(v["all_pass"], true);
        assert!(json.contains("1.0000000000000000e0"));
    }

    #[test]
    fn infinite_z_serializes_as_null() {
        let mut rep = IdentityReport::new();
        rep.push(IdentityRecord::sigma("broken", 2.0, 0.0, 1.0, 4.0));
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert!(v["identities"][0]["z"].is_null());
        assert_eq!(v["all_pass"], false);
    }
}
