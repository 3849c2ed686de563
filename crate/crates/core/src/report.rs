//! Shared report records and the fixed-precision JSON/CSV emitters.
//!
//! Every real written to disk uses 17 significant digits so that a value
//! read back parses to the identical `f64`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Outcome of one named property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    /// Largest excess over the bound observed (0 when nothing exceeded it).
    pub violation: f64,
    /// Number of indices that exceeded the bound beyond tolerance.
    pub violations: usize,
    /// Number of indices inspected.
    pub checked: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PropertyCheck {
    pub(crate) fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass: true,
            violation: 0.0,
            violations: 0,
            checked: 0,
            note: None,
        }
    }

    /// Record one inspected index whose bound was exceeded by `excess`
    /// (negative or zero when satisfied); `allowed` is the tolerance band.
    pub(crate) fn observe(&mut self, excess: f64, allowed: f64) {
        self.checked += 1;
        if excess > 0.0 {
            self.violation = self.violation.max(excess);
        }
        if excess > allowed || excess.is_nan() {
            self.violations += 1;
            self.pass = false;
        }
    }

    pub(crate) fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Format a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // non-finite values are not valid JSON numbers; CSV gets the literal
        format!("{x}")
    }
}

struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt_real(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serialize `value` as compact JSON with 17-significant-digit reals.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Write a header row and records as RFC-4180 CSV.
pub fn write_csv<W: Write>(
    writer: W,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
