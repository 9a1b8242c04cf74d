//! Numbers written as angle expressions (`"pi/2"`, `"3pi/4"`, `"-2*pi"`) and
//! interval literals (`"[0, pi)"`).

use std::f64::consts::PI;
use std::fmt;

use jacobi_index::IntervalSpec;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// Parses a real number, optionally a rational multiple of `pi`.
///
/// Accepted forms: plain floats, `pi`, `2pi`, `2*pi`, `0.5 pi`, `-pi`, and any
/// of these divided by a float (`3pi/2`).
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let text: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    if text.is_empty() {
        return Err("empty number".into());
    }
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => {
            let d: f64 = d.parse().map_err(|_| format!("bad denominator in '{s}'"))?;
            if d == 0.0 {
                return Err(format!("division by zero in '{s}'"));
            }
            (n, d)
        }
        None => (text.as_str(), 1.0),
    };
    let value = match num.strip_suffix("pi") {
        Some(coef) => {
            let coef = coef.strip_suffix('*').unwrap_or(coef);
            let c = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().map_err(|_| format!("bad coefficient in '{s}'"))?,
            };
            c * PI
        }
        None => num.parse::<f64>().map_err(|_| format!("not a number: '{s}'"))?,
    };
    let v = value / den;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: '{s}'"))
    }
}

/// A config number: JSON number or angle expression string. Keeps the
/// original text so reports echo what was written.
#[derive(Debug, Clone, PartialEq)]
pub struct Angle {
    pub value: f64,
    pub text: Option<String>,
}

impl Angle {
    pub fn new(value: f64) -> Self {
        Angle { value, text: None }
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.text {
            Some(t) => s.serialize_str(t),
            None => s.serialize_f64(self.value),
        }
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Angle;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or an angle string such as \"pi/2\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Angle, E> {
                Ok(Angle::new(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Angle, E> {
                Ok(Angle::new(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Angle, E> {
                Ok(Angle::new(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Angle, E> {
                let value = parse_angle(v).map_err(E::custom)?;
                Ok(Angle {
                    value,
                    text: Some(v.to_string()),
                })
            }
        }
        d.deserialize_any(V)
    }
}

/// Parses `"[lo, hi]"`, `"(lo, hi]"`, `"[lo, hi)"` or `"(lo, hi)"`.
pub fn parse_interval(s: &str) -> Result<IntervalSpec, String> {
    let t = s.trim();
    let (open, rest) = t.split_at(t.chars().next().map_or(0, char::len_utf8));
    let include_lo = match open {
        "[" => true,
        "(" => false,
        _ => return Err(format!("interval '{s}' must start with '[' or '('")),
    };
    let (body, close) = rest.split_at(rest.len().saturating_sub(1));
    let include_hi = match close {
        "]" => true,
        ")" => false,
        _ => return Err(format!("interval '{s}' must end with ']' or ')'")),
    };
    let (lo, hi) = body.split_once(',').ok_or_else(|| format!("interval '{s}' needs two endpoints"))?;
    IntervalSpec::new(parse_angle(lo)?, parse_angle(hi)?, include_lo, include_hi).map_err(|e| e.to_string())
}

/// Interval in a config: literal string or explicit object.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalArg {
    pub spec: IntervalSpec,
    pub text: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalObject {
    lo: Angle,
    hi: Angle,
    #[serde(default = "yes")]
    include_lo: bool,
    #[serde(default = "yes")]
    include_hi: bool,
}

fn yes() -> bool {
    true
}

impl Serialize for IntervalArg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.text {
            Some(t) => s.serialize_str(t),
            None => self.spec.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for IntervalArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Object(IntervalObject),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) => Ok(IntervalArg {
                spec: parse_interval(&t).map_err(de::Error::custom)?,
                text: Some(t),
            }),
            Raw::Object(o) => Ok(IntervalArg {
                spec: IntervalSpec::new(o.lo.value, o.hi.value, o.include_lo, o.include_hi)
                    .map_err(de::Error::custom)?,
                text: None,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_forms() {
        let cases = [
            ("pi", PI),
            ("pi/2", PI / 2.0),
            ("3pi/2", 1.5 * PI),
            ("2*pi", 2.0 * PI),
            ("-pi/4", -PI / 4.0),
            ("0.5 pi", 0.5 * PI),
            ("1.25", 1.25),
            ("3/4", 0.75),
            (" PI ", PI),
        ];
        for (s, v) in cases {
            assert!((parse_angle(s).unwrap() - v).abs() < 1e-15, "{s}");
        }
        for bad in ["", "pie", "pi/0", "x", "1/x"] {
            assert!(parse_angle(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn interval_literals() {
        let iv = parse_interval("(0, pi]").unwrap();
        assert_eq!((iv.lo, iv.include_lo, iv.include_hi), (0.0, false, true));
        assert!((iv.hi - PI).abs() < 1e-15);
        assert!(parse_interval("[pi, 0]").is_err());
        assert!(parse_interval("0, pi").is_err());
        let parsed: IntervalArg = serde_json::from_str(r#"{"lo": 0, "hi": "2pi", "include_hi": false}"#).unwrap();
        assert!(parsed.spec.include_lo && !parsed.spec.include_hi);
    }

    proptest::proptest! {
        #[test]
        fn multiples_of_pi_parse(k in -40i32..40, d in 1u32..13) {
            let v = parse_angle(&format!("{k}pi/{d}")).unwrap();
            proptest::prop_assert!((v - k as f64 * PI / d as f64).abs() <= 1e-14 * (1.0 + v.abs()));
            let spaced = parse_angle(&format!("{k} * pi / {d}")).unwrap();
            proptest::prop_assert_eq!(v, spaced);
        }

        #[test]
        fn plain_numbers_round_trip(x in -1e6..1e6f64) {
            proptest::prop_assert_eq!(parse_angle(&x.to_string()).unwrap(), x);
        }
    }
}
