use std::io;

use crate::bounds::BoundKind;

pub const RESULTS_HEADER: [&str; 12] = [
    "scenario_id",
    "kind",
    "H",
    "N",
    "M",
    "epsilon",
    "theta_star",
    "bound_value",
    "bound_unit",
    "stable",
    "empirical_frequency",
    "confidence_limit",
];

/// One line of a results table. Optional cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario_id: String,
    pub kind: BoundKind,
    pub hops: u32,
    pub through: u32,
    pub cross: u32,
    pub epsilon: f64,
    pub theta_star: Option<f64>,
    pub bound_value: f64,
    pub stable: bool,
    pub empirical_frequency: Option<f64>,
    pub confidence_limit: Option<f64>,
}

/// Shortest representation that parses back to the same `f64`.
fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

impl ResultRow {
    pub fn fields(&self) -> [String; 12] {
        [
            self.scenario_id.clone(),
            self.kind.as_str().to_string(),
            self.hops.to_string(),
            self.through.to_string(),
            self.cross.to_string(),
            float(self.epsilon),
            opt(self.theta_star),
            float(self.bound_value),
            self.kind.unit().to_string(),
            self.stable.to_string(),
            opt(self.empirical_frequency),
            opt(self.confidence_limit),
        ]
    }
}

/// Writes the header and `rows` as comma-separated values with `\n` line
/// endings.
pub fn write_results_csv<W: io::Write>(out: W, rows: &[ResultRow]) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}
