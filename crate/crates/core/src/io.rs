//! Output helpers: every float is written with 17 significant digits.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

use crate::error::Result;

/// Compact JSON whose floats keep all 17 significant digits.
struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }
}

/// Indented variant for human-facing config and summary files.
struct PrettyFullPrecision<'a>(PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl Formatter for PrettyFullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", fmt_f64(value))
    }

    forward!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn write_json<W: Write, T: Serialize>(writer: W, value: &T) -> Result<()> {
    let mut ser = Serializer::with_formatter(writer, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(())
}

pub fn write_json_pretty<W: Write, T: Serialize>(writer: W, value: &T) -> Result<()> {
    let mut ser = Serializer::with_formatter(writer, PrettyFullPrecision(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let vals = vec![0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0];
        let mut buf = Vec::new();
        write_json(&mut buf, &vals).unwrap();
        let back: Vec<f64> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, vals);
        assert!(String::from_utf8(buf).unwrap().contains("3.3333333333333331e-1"));
    }

    #[test]
    fn pretty_output_is_valid_json() {
        let v = serde_json::json!({"a": [1.5, 2], "b": {"c": 0.25}});
        let mut buf = Vec::new();
        write_json_pretty(&mut buf, &v).unwrap();
        let back: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, v);
        assert!(String::from_utf8(buf).unwrap().contains('\n'));
    }
}
