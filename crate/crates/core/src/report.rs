//! CSV formatting helpers shared by the trace writers and the CLI.

use std::fmt::Write as _;

/// Formats a float with 17 significant digits, enough to round-trip any
/// `f64` exactly.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Joins fields with commas and terminates the row with a newline.
pub fn csv_line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(f.as_ref());
    }
    out.push('\n');
    out
}

/// `prefix_1, ..., prefix_n`.
pub fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Appends numbers to a row being built.
pub fn push_nums(row: &mut Vec<String>, values: &[f64]) {
    row.extend(values.iter().map(|v| fmt_num(*v)));
}

/// Renders a header plus rows into one CSV document.
pub fn csv_document(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = csv_line(header);
    for r in rows {
        let _ = write!(out, "{}", csv_line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 12345.678901234567, -2.5e-300, 0.0] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn lines() {
        assert_eq!(csv_line(["a", "b"]), "a,b\n");
        assert_eq!(indexed("p", 2), vec!["p_1", "p_2"]);
    }
}
