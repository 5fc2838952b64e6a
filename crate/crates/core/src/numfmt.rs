//! Number rendering shared by file writers and command templates.

/// Formats `x` like C's `%.17g`: 17 significant digits, trailing zeros
/// removed, scientific notation for very small or large magnitudes.
/// Every finite `f64` survives a round trip through this representation.
pub fn format_sig17(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();

    let body = if !(-5..17).contains(&exp) {
        let mut m = format!("{}.{}", &digits[..1], &digits[1..]);
        trim_fraction(&mut m);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else if exp >= 0 {
        let split = exp as usize + 1;
        let mut m = format!("{}.{}", &digits[..split], &digits[split..]);
        trim_fraction(&mut m);
        m
    } else {
        let mut m = format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits);
        trim_fraction(&mut m);
        m
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

fn trim_fraction(s: &mut String) {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
}
