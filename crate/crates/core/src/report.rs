//! Text output helpers shared by the CSV emitters.

/// Format a float with the given number of significant digits in scientific
/// notation. Locale independent; negative zero is normalized.
pub fn format_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{:.*e}", digits - 1, x)
}
