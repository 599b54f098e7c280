//! Maidenhead grid locators: the small-area unit wells are grouped by.
//!
//! A 6-character locator names a cell 5 arc-minutes wide (longitude) by
//! 2.5 arc-minutes tall (latitude). The 4-character prefix names the
//! enclosing 2°x1° square and is used as the coarse imputation group.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Spherical earth radius used for cell areas, in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.7613;

/// Fine-cell widths in degrees: 5' of longitude, 2.5' of latitude.
const LON_CELL_DEG: f64 = 5.0 / 60.0;
const LAT_CELL_DEG: f64 = 2.5 / 60.0;

/// Fine cells per degree: 12 in longitude, 24 in latitude.
const LON_CELLS_PER_DEG: f64 = 12.0;
const LAT_CELLS_PER_DEG: f64 = 24.0;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("latitude {0} out of range: must satisfy -90 <= lat < 90")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} out of range: must satisfy -180 <= lon < 180")]
    LongitudeOutOfRange(f64),
    #[error("locator must be {expected} characters, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("invalid locator character {found:?} at position {position}: expected {expected}")]
    BadCharacter {
        position: usize,
        found: char,
        expected: &'static str,
    },
}

/// A 6-character Maidenhead locator: field pair A-R, square pair 0-9,
/// subsquare pair a-x.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Locator6([u8; 6]);

/// The first four characters of a [`Locator6`]: a 2°x1° square.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Locator4([u8; 4]);

impl Locator6 {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("locator bytes are ASCII")
    }
}

impl Locator4 {
    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("locator bytes are ASCII")
    }
}

impl fmt::Display for Locator6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Locator6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Locator6({})", self.as_str())
    }
}

impl fmt::Display for Locator4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Locator4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Locator4({})", self.as_str())
    }
}

fn check_char(
    byte: u8,
    position: usize,
    lo: u8,
    hi: u8,
    expected: &'static str,
) -> Result<u8, GridError> {
    if byte < lo || byte > hi {
        return Err(GridError::BadCharacter {
            position,
            found: byte as char,
            expected,
        });
    }
    Ok(byte - lo)
}

impl FromStr for Locator6 {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 6 {
            return Err(GridError::BadLength {
                expected: 6,
                got: s.chars().count(),
            });
        }
        check_char(bytes[0], 0, b'A', b'R', "uppercase A-R")?;
        check_char(bytes[1], 1, b'A', b'R', "uppercase A-R")?;
        check_char(bytes[2], 2, b'0', b'9', "digit 0-9")?;
        check_char(bytes[3], 3, b'0', b'9', "digit 0-9")?;
        check_char(bytes[4], 4, b'a', b'x', "lowercase a-x")?;
        check_char(bytes[5], 5, b'a', b'x', "lowercase a-x")?;
        Ok(Locator6(bytes.try_into().unwrap()))
    }
}

impl FromStr for Locator4 {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 4 {
            return Err(GridError::BadLength {
                expected: 4,
                got: s.chars().count(),
            });
        }
        check_char(bytes[0], 0, b'A', b'R', "uppercase A-R")?;
        check_char(bytes[1], 1, b'A', b'R', "uppercase A-R")?;
        check_char(bytes[2], 2, b'0', b'9', "digit 0-9")?;
        check_char(bytes[3], 3, b'0', b'9', "digit 0-9")?;
        Ok(Locator4(bytes.try_into().unwrap()))
    }
}

impl Serialize for Locator6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Locator6 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

impl Serialize for Locator4 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Locator4 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Encode a coordinate into the 6-character locator of the cell containing it.
///
/// Cells are half-open `[low, high)` on both axes, so every in-range
/// coordinate maps to exactly one cell.
pub fn encode_locator(lat: f64, lon: f64) -> Result<Locator6, GridError> {
    if !(-90.0..90.0).contains(&lat) {
        return Err(GridError::LatitudeOutOfRange(lat));
    }
    if !(-180.0..180.0).contains(&lon) {
        return Err(GridError::LongitudeOutOfRange(lon));
    }

    // Work in fine-cell units so each division below is integral.
    let fine_lon = ((lon + 180.0) * LON_CELLS_PER_DEG).floor() as i64;
    let fine_lat = ((lat + 90.0) * LAT_CELLS_PER_DEG).floor() as i64;
    let fine_lon = fine_lon.clamp(0, 360 * 12 - 1) as u32;
    let fine_lat = fine_lat.clamp(0, 180 * 24 - 1) as u32;

    // 240 fine cells per field on both axes (20 deg x 12, 10 deg x 24),
    // 24 per square (2 deg x 12, 1 deg x 24).
    let code = [
        b'A' + (fine_lon / 240) as u8,
        b'A' + (fine_lat / 240) as u8,
        b'0' + (fine_lon % 240 / 24) as u8,
        b'0' + (fine_lat % 240 / 24) as u8,
        b'a' + (fine_lon % 24) as u8,
        b'a' + (fine_lat % 24) as u8,
    ];
    Ok(Locator6(code))
}

/// Southwest corner of a cell, in degrees (lat, lon).
fn block_low_corner(loc: &Locator6) -> (f64, f64) {
    let b = &loc.0;
    let lon = -180.0
        + f64::from(b[0] - b'A') * 20.0
        + f64::from(b[2] - b'0') * 2.0
        + f64::from(b[4] - b'a') * LON_CELL_DEG;
    let lat = -90.0
        + f64::from(b[1] - b'A') * 10.0
        + f64::from(b[3] - b'0')
        + f64::from(b[5] - b'a') * LAT_CELL_DEG;
    (lat, lon)
}

/// Geometric center of a cell, in degrees (lat, lon).
pub fn block_center(loc: &Locator6) -> (f64, f64) {
    let (lat, lon) = block_low_corner(loc);
    (lat + LAT_CELL_DEG / 2.0, lon + LON_CELL_DEG / 2.0)
}

/// The 4-character prefix naming the enclosing 2°x1° square.
pub fn prefix4(loc: &Locator6) -> Locator4 {
    Locator4([loc.0[0], loc.0[1], loc.0[2], loc.0[3]])
}

/// Spherical-earth cell area: the 2.5' latitude arc times the 5' longitude
/// arc at the cell's center latitude.
pub fn block_area_sq_miles(loc: &Locator6) -> f64 {
    let (center_lat, _) = block_center(loc);
    area_at_center_lat(center_lat)
}

fn area_at_center_lat(center_lat_deg: f64) -> f64 {
    let lat_arc = EARTH_RADIUS_MILES * LAT_CELL_DEG.to_radians();
    let lon_arc =
        EARTH_RADIUS_MILES * center_lat_deg.to_radians().cos() * LON_CELL_DEG.to_radians();
    lat_arc * lon_arc
}
