//! Text rendering shared by every artifact.

use illusion_core::squeeze::{format_rational, ExactRational};
use serde_json::Value;

/// `x` rounded to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("scientific notation parses")
}

/// Shortest text that reads back as `round_sig(x)`.
pub fn float_text(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        let r = round_sig(x);
        if r == 0.0 {
            "0".into()
        } else if r.abs() < 1e-4 || r.abs() >= 1e16 {
            format!("{r:e}")
        } else {
            format!("{r}")
        }
    }
}

/// JSON number rounded to 12 significant digits; non-finite values become
/// strings since JSON has no literal for them.
pub fn float_json(x: f64) -> Value {
    match serde_json::Number::from_f64(round_sig(x)) {
        Some(n) if round_sig(x) != 0.0 => Value::Number(n),
        Some(_) => Value::from(0),
        None => Value::String(float_text(x)),
    }
}

pub fn rational_text(x: &ExactRational) -> String {
    format_rational(x)
}

/// Round every float in a JSON tree in place.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            *value = float_json(n.as_f64().expect("f64 number"));
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(float_text(1.0 / 3.0), "0.333333333333");
        assert_eq!(float_text(2.0), "2");
        assert_eq!(float_text(-0.0), "0");
        assert_eq!(float_text(123_456_789.123_456_79), "123456789.123");
        assert_eq!(float_text(f64::INFINITY), "inf");
        assert_eq!(float_text(1e-20 / 3.0), "3.33333333333e-21");
        assert_eq!(float_text(7.105427357601002e-15), "7.1054273576e-15");
        assert_eq!(float_text(1e-4), "0.0001");
    }

    #[test]
    fn json_rounding() {
        let mut v = serde_json::json!({"a": [0.1 + 0.2, 1, "x"], "b": {"c": 2.0f64.sqrt()}});
        round_floats(&mut v);
        assert_eq!(v.to_string(), r#"{"a":[0.3,1,"x"],"b":{"c":1.41421356237}}"#);
        assert_eq!(float_json(f64::INFINITY), Value::String("inf".into()));
    }
}
