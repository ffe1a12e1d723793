//! Fixed-precision decimal formatting shared by every CSV writer.

/// Formats `x` in positional decimal notation with 9 significant digits.
///
/// Non-finite values are written as `NaN`, `inf` and `-inf`.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mut exp = x.abs().log10().floor() as i32;
    // rounding can carry into the next decade (9.9999999996 -> 10.0000000)
    let rounded = round_sig(x, exp);
    if rounded.abs() >= 10f64.powi(exp + 1) {
        exp += 1;
    }
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{:.*}", decimals, round_sig(x, exp));
    trim_negative_zero(s)
}

fn round_sig(x: f64, exp: i32) -> f64 {
    let shift = 8 - exp;
    if shift >= 0 && shift < 300 {
        let scale = 10f64.powi(shift);
        (x * scale).round() / scale
    } else if shift < 0 {
        let scale = 10f64.powi(-shift);
        (x / scale).round() * scale
    } else {
        x
    }
}

fn trim_negative_zero(s: String) -> String {
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}
