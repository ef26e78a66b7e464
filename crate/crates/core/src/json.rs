//! Byte-stable JSON output: sorted object keys and 17-significant-digit floats.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, Serializer};

#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{}", format_f64(value))
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.write_f64(writer, f64::from(value))
    }

    fn write_null<W>(&mut self, writer: &mut W) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        CompactFormatter.write_null(writer)
    }
}

/// Scientific notation with 17 significant digits; round-trips every finite f64.
pub fn format_f64(value: f64) -> String {
    if value == 0.0 {
        // keep the sign of negative zero out of the output
        return "0.0000000000000000e0".to_string();
    }
    format!("{value:.16e}")
}

/// Serialize through `serde_json::Value` (whose maps are ordered) and emit
/// with [`CanonicalFormatter`].
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(value)?;
    let mut buf = Vec::new();
    let mut ser = Serializer::with_formatter(&mut buf, CanonicalFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let mut m = HashMap::new();
        m.insert("zeta", 0.1);
        m.insert("alpha", 2.0);
        let s = to_canonical_string(&m).unwrap();
        assert_eq!(s, r#"{"alpha":2.0000000000000000e0,"zeta":1.0000000000000001e-1}"#);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 1e300, 7.0] {
            let back: f64 = format_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn integers_stay_integers() {
        let s = to_canonical_string(&serde_json::json!({"n": 3, "x": 3.0})).unwrap();
        assert_eq!(s, r#"{"n":3,"x":3.0000000000000000e0}"#);
    }
}
