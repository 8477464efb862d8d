//! C99 `%a`-style hexadecimal floats: lossless, locale-free text for `f64`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// `0x1.8p+1` for 3.0; `nan`, `inf`, `-inf` for the non-finite values.
pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let sign = if x.is_sign_negative() { "-" } else { "" };
    if x.is_infinite() {
        return format!("{sign}inf");
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 {
        (0, -1022)
    } else {
        (1, exp - 1023)
    };
    let digits = format!("{mant:013x}");
    let digits = digits.trim_end_matches('0');
    let frac = if digits.is_empty() {
        String::new()
    } else {
        format!(".{digits}")
    };
    format!("{sign}0x{lead}{frac}p{e:+}")
}

pub fn parse(s: &str) -> Result<f64, String> {
    match s.trim() {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => hexf_parse::parse_hexf64(t, false).map_err(|e| format!("bad hex float '{t}': {e}")),
    }
}

/// An `f64` that (de)serializes as a hex float string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hex(pub f64);

impl Serialize for Hex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(self.0))
    }
}

impl<'de> Deserialize<'de> for Hex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map(Hex).map_err(serde::de::Error::custom)
    }
}

pub fn hex_vec(v: &[f64]) -> Vec<Hex> {
    v.iter().copied().map(Hex).collect()
}

pub fn unhex_vec(v: &[Hex]) -> Vec<f64> {
    v.iter().map(|h| h.0).collect()
}

pub fn hex_rows(rows: &[Vec<f64>]) -> Vec<Vec<Hex>> {
    rows.iter().map(|r| hex_vec(r)).collect()
}

pub fn unhex_rows(rows: &[Vec<Hex>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| unhex_vec(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_encodings() {
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(-0.0), "-0x0p+0");
        assert_eq!(format(0.1), "0x1.999999999999ap-4");
        assert_eq!(format(f64::MIN_POSITIVE / 4.0), "0x0.4p-1022");
    }

    #[test]
    fn round_trips_bits() {
        let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
        for _ in 0..20_000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let v = f64::from_bits(x);
            let back = parse(&format(v)).unwrap();
            assert!(
                v.to_bits() == back.to_bits() || (v.is_nan() && back.is_nan()),
                "{v:e}"
            );
        }
        for v in [
            0.0,
            -0.0,
            f64::MAX,
            f64::MIN_POSITIVE,
            5e-324,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ] {
            assert_eq!(parse(&format(v)).unwrap().to_bits(), v.to_bits());
        }
    }
}
