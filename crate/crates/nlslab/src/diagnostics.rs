//! The fixed per-sample diagnostics record shared by the stepper, the
//! classifier, and the CSV writer.

/// One time sample. Column order is fixed and mirrored by `CSV_HEADER`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub quartic: f64,
    pub virial: f64,
    pub virial_rate: f64,
    pub s: f64,
    pub sup: f64,
    pub l4: f64,
}

pub const CSV_HEADER: &str = "t,mass,energy,kinetic,quartic,virial,virial_rate,S,sup,l4";

impl DiagnosticsRow {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.mass,
            self.energy,
            self.kinetic,
            self.quartic,
            self.virial,
            self.virial_rate,
            self.s,
            self.sup,
            self.l4,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.mass,
            self.energy,
            self.kinetic,
            self.quartic,
            self.virial,
            self.virial_rate,
            self.s,
            self.sup,
            self.l4
        )
    }
}
