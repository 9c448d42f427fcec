//! Deterministic report output: JSON with 17 significant digits and CSV.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::Formatter;

/// Serializers for reals that may be infinite or NaN, which JSON numbers
/// cannot represent; such values are written as the strings `"inf"`, `"-inf"`
/// and `"nan"`.
pub mod num {
    use serde::ser::{SerializeSeq, Serializer};

    fn text(v: f64) -> &'static str {
        if v.is_nan() {
            "nan"
        } else if v > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    pub fn f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(text(*v))
        }
    }

    pub fn opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => f64(x, s),
            None => s.serialize_none(),
        }
    }

    pub fn vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&Wrapped(*x))?;
        }
        seq.end()
    }

    pub fn matrix<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for row in v {
            seq.serialize_element(&Row(row))?;
        }
        seq.end()
    }

    struct Wrapped(f64);

    impl serde::Serialize for Wrapped {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            f64(&self.0, s)
        }
    }

    struct Row<'a>(&'a [f64]);

    impl serde::Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            vec(self.0, s)
        }
    }
}

/// Pretty JSON formatter printing every real with 17 significant digits.
struct RoundTripFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_key(w)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serialize `value` as pretty JSON with round-trip-safe reals, followed by a
/// newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> crate::Result<String> {
    let mut out = Vec::new();
    let formatter = RoundTripFormatter {
        inner: serde_json::ser::PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Format a real for CSV output with 17 significant digits.
pub fn csv_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Write `body` to `path`, or to standard output when `path` is `None`.
pub fn emit(body: &str, path: Option<&std::path::Path>) -> crate::Result<()> {
    match path {
        Some(p) => std::fs::write(p, body)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Sample {
        #[serde(serialize_with = "num::f64")]
        a: f64,
        #[serde(serialize_with = "num::f64")]
        b: f64,
        #[serde(serialize_with = "num::vec")]
        c: Vec<f64>,
        d: f64,
    }

    #[test]
    fn reals_round_trip() {
        let s = Sample {
            a: 0.1,
            b: f64::INFINITY,
            c: vec![1.0 / 3.0, f64::NEG_INFINITY],
            d: 2.0,
        };
        let json = to_json(&s).unwrap();
        assert!(json.contains("\"inf\""));
        assert!(json.contains("\"-inf\""));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["a"].as_f64().unwrap(), 0.1);
        assert_eq!(v["c"][0].as_f64().unwrap(), 1.0 / 3.0);
        assert_eq!(v["d"].as_f64().unwrap(), 2.0);
        assert_eq!(to_json(&s).unwrap(), json);
    }

    #[test]
    fn csv_numbers() {
        assert_eq!(csv_number(0.5), "5.0000000000000000e-1");
        assert_eq!(csv_number(f64::INFINITY), "inf");
        let x = 0.1 + 0.2;
        assert_eq!(csv_number(x).parse::<f64>().unwrap(), x);
    }
}
