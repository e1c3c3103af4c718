//! JSON helpers shared by check records and reports.

use serde_json::{Number, Value};

/// `x` as a JSON number printed with 17 significant digits; non-finite
/// values become the strings `"inf"`, `"-inf"` or `"nan"`.
pub fn json_number(x: f64) -> Value {
    if !x.is_finite() {
        let s = if x.is_nan() {
            "nan"
        } else if x > 0.0 {
            "inf"
        } else {
            "-inf"
        };
        return Value::String(s.to_string());
    }
    let text = format!("{x:.16e}");
    Value::Number(
        text.parse::<Number>()
            .expect("formatted float parses as a JSON number"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(json_number(0.1).to_string(), "1.0000000000000001e-1");
        assert_eq!(json_number(f64::INFINITY), Value::String("inf".into()));
        let back: f64 = json_number(std::f64::consts::PI)
            .to_string()
            .parse()
            .unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }
}
