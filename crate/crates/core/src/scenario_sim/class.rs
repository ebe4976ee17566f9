use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Driving context, with stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextClass {
    InnerCity = 0,
    CountryRoad = 1,
    Highway = 2,
    ParkingLot = 3,
    TrafficJam = 4,
}

impl ContextClass {
    pub const ALL: [ContextClass; 5] = [
        ContextClass::InnerCity,
        ContextClass::CountryRoad,
        ContextClass::Highway,
        ContextClass::ParkingLot,
        ContextClass::TrafficJam,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Two-letter abbreviation (IC, CR, HW, PL, TJ).
    pub fn abbrev(self) -> &'static str {
        match self {
            ContextClass::InnerCity => "IC",
            ContextClass::CountryRoad => "CR",
            ContextClass::Highway => "HW",
            ContextClass::ParkingLot => "PL",
            ContextClass::TrafficJam => "TJ",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContextClass::InnerCity => "inner_city",
            ContextClass::CountryRoad => "country_road",
            ContextClass::Highway => "highway",
            ContextClass::ParkingLot => "parking_lot",
            ContextClass::TrafficJam => "traffic_jam",
        }
    }
}

impl fmt::Display for ContextClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContextClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s) || c.abbrev().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown context class {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        let codes: Vec<usize> = ContextClass::ALL.iter().map(|c| c.index()).collect();
        assert_eq!(codes, vec![0, 1, 2, 3, 4]);
        assert_eq!(ContextClass::from_index(3), Some(ContextClass::ParkingLot));
        assert_eq!(ContextClass::from_index(5), None);
        assert_eq!("tj".parse::<ContextClass>(), Ok(ContextClass::TrafficJam));
        assert_eq!("highway".parse::<ContextClass>(), Ok(ContextClass::Highway));
    }
}
