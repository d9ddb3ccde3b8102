//! Quantities written as `"27 dBm"`, `"40 MHz"` or bare SI numbers.

use serde::Deserialize;

use platoon_core::model::{db_to_linear, dbm_to_watts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Length,
    Speed,
    Time,
    Frequency,
    Power,
    PowerDensity,
    Bits,
    Rate,
    LinearDensity,
    Dimensionless,
}

impl Kind {
    /// Unit written in table headers.
    pub fn si_unit(self) -> &'static str {
        match self {
            Kind::Length => "m",
            Kind::Speed => "m/s",
            Kind::Time => "s",
            Kind::Frequency => "Hz",
            Kind::Power => "W",
            Kind::PowerDensity => "W/Hz",
            Kind::Bits => "bit",
            Kind::Rate => "1/s",
            Kind::LinearDensity => "1/m",
            Kind::Dimensionless => "1",
        }
    }

    fn convert(self, value: f64, unit: &str) -> Option<f64> {
        let scaled = |factor: f64| Some(value * factor);
        let per = |divisor: f64| Some(value / divisor);
        let db = |milli: bool| {
            Some(if milli {
                dbm_to_watts(value)
            } else {
                db_to_linear(value)
            })
        };
        match (self, unit) {
            (Kind::Length, "m") => scaled(1.0),
            (Kind::Length, "km") => scaled(1e3),
            (Kind::Speed, "m/s") => scaled(1.0),
            (Kind::Speed, "km/h") => per(3.6),
            (Kind::Time, "s") => scaled(1.0),
            (Kind::Time, "ms") => per(1e3),
            (Kind::Time, "us") => per(1e6),
            (Kind::Frequency, "Hz") => scaled(1.0),
            (Kind::Frequency, "kHz") => scaled(1e3),
            (Kind::Frequency, "MHz") => scaled(1e6),
            (Kind::Frequency, "GHz") => scaled(1e9),
            (Kind::Power, "W") => scaled(1.0),
            (Kind::Power, "mW") => per(1e3),
            (Kind::Power, "dBW") => db(false),
            (Kind::Power, "dBm") => db(true),
            (Kind::PowerDensity, "W/Hz") => scaled(1.0),
            (Kind::PowerDensity, "dBW/Hz") => db(false),
            (Kind::PowerDensity, "dBm/Hz") => db(true),
            (Kind::Bits, "bit" | "bits") => scaled(1.0),
            (Kind::Bits, "kbit") => scaled(1e3),
            (Kind::Bits, "B" | "byte" | "bytes") => scaled(8.0),
            (Kind::Rate, "1/s" | "/s" | "packets/s" | "Hz") => scaled(1.0),
            (Kind::LinearDensity, "1/m" | "/m" | "veh/m") => scaled(1.0),
            (Kind::LinearDensity, "1/km" | "/km" | "veh/km") => per(1e3),
            (Kind::Dimensionless, "" | "1") => scaled(1.0),
            (Kind::Dimensionless, "dB") => db(false),
            _ => None,
        }
    }

    fn accepted(self) -> &'static str {
        match self {
            Kind::Length => "m, km",
            Kind::Speed => "m/s, km/h",
            Kind::Time => "s, ms, us",
            Kind::Frequency => "Hz, kHz, MHz, GHz",
            Kind::Power => "W, mW, dBW, dBm",
            Kind::PowerDensity => "W/Hz, dBW/Hz, dBm/Hz",
            Kind::Bits => "bit, kbit, B",
            Kind::Rate => "1/s, packets/s",
            Kind::LinearDensity => "1/m, 1/km, veh/m, veh/km",
            Kind::Dimensionless => "no unit or dB",
        }
    }
}

/// A number in SI units, or a string with an explicit unit.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl Quantity {
    pub fn to_si(&self, kind: Kind) -> Result<f64, String> {
        match self {
            Quantity::Number(x) => Ok(*x),
            Quantity::Text(text) => {
                let text = text.trim();
                let split = text
                    .find(|c: char| {
                        !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
                    })
                    .unwrap_or(text.len());
                let (number, unit) = text.split_at(split);
                let value: f64 = number
                    .trim()
                    .parse()
                    .map_err(|_| format!("cannot read a number from {text:?}"))?;
                kind.convert(value, unit.trim()).ok_or_else(|| {
                    format!(
                        "unit {:?} not accepted here (use {})",
                        unit.trim(),
                        kind.accepted()
                    )
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Quantity {
        Quantity::Text(s.to_string())
    }

    #[test]
    fn table_values_normalize() {
        assert!((q("27 dBm").to_si(Kind::Power).unwrap() - 0.501187).abs() < 1e-6);
        assert!(
            (q("-174 dBm/Hz").to_si(Kind::PowerDensity).unwrap() / 3.981e-21 - 1.0).abs() < 1e-3
        );
        assert_eq!(q("40 MHz").to_si(Kind::Frequency).unwrap(), 40e6);
        assert!((q("13.9 ms").to_si(Kind::Time).unwrap() - 0.0139).abs() < 1e-17);
        assert_eq!(q("3200 bit").to_si(Kind::Bits).unwrap(), 3200.0);
        assert_eq!(q("400 B").to_si(Kind::Bits).unwrap(), 3200.0);
        assert_eq!(q("10 veh/km").to_si(Kind::LinearDensity).unwrap(), 0.01);
        assert_eq!(q("1e3m").to_si(Kind::Length).unwrap(), 1000.0);
        assert_eq!(Quantity::Number(3.7).to_si(Kind::Length).unwrap(), 3.7);
    }

    #[test]
    fn wrong_unit_is_named() {
        let err = q("20 MHz").to_si(Kind::Length).unwrap_err();
        assert!(err.contains("\"MHz\"") && err.contains("m, km"), "{err}");
        assert!(q("fast").to_si(Kind::Speed).is_err());
    }
}
