//! Spatial dimension and point helpers.
//!
//! Points are stored as `[f64; 3]` with only the first `d` coordinates in
//! use; particle clouds store coordinates flat for compactness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial dimension, restricted to 1..=3.
///
/// The occupation measure has a Lebesgue density only for `d <= 3`; all
/// density and regularity features reject anything above that, so invalid
/// dimensions are unrepresentable.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Dim(u8);

impl Dim {
    pub const D1: Dim = Dim(1);
    pub const D2: Dim = Dim(2);
    pub const D3: Dim = Dim(3);

    pub fn new(d: u8) -> Result<Self> {
        if (1..=3).contains(&d) {
            Ok(Dim(d))
        } else {
            Err(Error::Domain(format!(
                "dimension {d} not supported: the occupation measure is singular \
                 with respect to Lebesgue measure outside d in 1..=3"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for Dim {
    type Error = Error;
    fn try_from(d: u8) -> Result<Self> {
        Dim::new(d)
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.0
    }
}

impl std::fmt::Display for Dim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point in `R^d`, padded with zeros beyond coordinate `d-1`.
pub type Point = [f64; 3];

/// Origin.
pub const ORIGIN: Point = [0.0, 0.0, 0.0];

/// Build a point from the first `<= 3` coordinates of a slice.
pub fn point(coords: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (slot, &c) in p.iter_mut().zip(coords) {
        *slot = c;
    }
    p
}

/// Squared Euclidean distance over the first `d` coordinates.
#[inline]
pub fn dist2(a: &Point, b: &Point, d: Dim) -> f64 {
    let mut s = 0.0;
    for i in 0..d.get() {
        let diff = a[i] - b[i];
        s += diff * diff;
    }
    s
}

/// Euclidean distance over the first `d` coordinates.
#[inline]
pub fn dist(a: &Point, b: &Point, d: Dim) -> f64 {
    dist2(a, b, d).sqrt()
}

/// Euclidean norm over the first `d` coordinates.
#[inline]
pub fn norm(a: &Point, d: Dim) -> f64 {
    dist(a, &ORIGIN, d)
}

/// Surface area of the unit sphere in `R^d` (2, 2π, 4π).
#[inline]
pub fn unit_sphere_area(d: Dim) -> f64 {
    match d.get() {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dim_rejects_out_of_range() {
        assert!(Dim::new(0).is_err());
        assert!(Dim::new(4).is_err());
        for d in 1..=3 {
            assert_eq!(Dim::new(d).unwrap().get(), d as usize);
        }
    }

    #[test]
    fn dim_serde_roundtrip_and_reject() {
        let d: Dim = serde_json::from_str("2").unwrap();
        assert_eq!(d, Dim::D2);
        assert!(serde_json::from_str::<Dim>("4").is_err());
    }

    #[test]
    fn distances_respect_dimension() {
        let a = [1.0, 2.0, 2.0];
        let b = [0.0, 0.0, 0.0];
        assert_eq!(dist(&a, &b, Dim::D1), 1.0);
        assert_eq!(dist(&a, &b, Dim::D3), 3.0);
    }
}
