//! Deterministic text formatting for CSV and key=value reports.

use crate::forms::C64;

/// Shortest round-trip decimal; `NaN`/`inf` spelled out.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:e}")
    }
}

/// `a+bi` / `a-bi`.
pub fn format_complex(z: C64) -> String {
    let im = if z.im == 0.0 { 0.0 } else { z.im };
    let sign = if im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", format_real(z.re), sign, format_real(im.abs()))
}

pub fn format_opt(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

/// Quotes a CSV field only when needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
