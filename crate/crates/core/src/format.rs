//! Deterministic text output for tables.

/// Significant digits written for every CSV number.
pub const CSV_SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` with 12 significant digits, `%g` style: positional notation
/// for decimal exponents in [−4, 12), scientific otherwise, trailing zeros
/// removed. Negative zero prints as `0`; non-finite values as `nan`, `inf`,
/// `-inf`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = CSV_SIGNIFICANT_DIGITS - 1;
    let sci = format!("{x:.digits$e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..CSV_SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (digits as i32 - exp) as usize;
        let fixed = format!("{x:.decimals$}");
        let out = trim_fraction(&fixed).to_string();
        if out == "-0" { "0".into() } else { out }
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Renders a table as CSV with LF line endings.
pub fn csv_table<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_cases() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(16.0 / 9.0), "1.77777777778");
        assert_eq!(format_number(3000.0), "3000");
        assert_eq!(format_number(1.225e-3), "0.001225");
        assert_eq!(format_number(1.5e-7), "1.5e-7");
        assert_eq!(format_number(123456789012345.0), "1.23456789012e14");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(f64::NAN), "nan");
        // rounding can carry into the next decade
        assert_eq!(format_number(9.9999999999999e-6), "1e-5");
    }

    #[test]
    fn table_layout() {
        let csv = csv_table(&["t", "x"], vec![vec!["0".into(), "1".into()]]);
        assert_eq!(csv, "t,x\n0,1\n");
    }

    proptest! {
        #[test]
        fn round_trips_to_twelve_digits(x in prop::num::f64::NORMAL) {
            let back: f64 = format_number(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-11 * x.abs());
        }
    }
}
