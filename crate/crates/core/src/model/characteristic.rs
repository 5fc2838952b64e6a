use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::ops::Index;
use std::str::FromStr;

use super::Fiber;
use crate::error::Error;

/// Per-fiber output characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Characteristic {
    StraightLength,
    CurvedLength,
    Diameter,
    Volume,
    SurfaceArea,
    OrientationPhi,
    OrientationTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    World,
    WorldSquared,
    WorldCubed,
    Degrees,
}

impl Characteristic {
    pub const COUNT: usize = 7;

    pub const ALL: [Characteristic; Self::COUNT] = [
        Characteristic::StraightLength,
        Characteristic::CurvedLength,
        Characteristic::Diameter,
        Characteristic::Volume,
        Characteristic::SurfaceArea,
        Characteristic::OrientationPhi,
        Characteristic::OrientationTheta,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Characteristic::StraightLength => "StraightLength",
            Characteristic::CurvedLength => "CurvedLength",
            Characteristic::Diameter => "Diameter",
            Characteristic::Volume => "Volume",
            Characteristic::SurfaceArea => "SurfaceArea",
            Characteristic::OrientationPhi => "OrientationPhi",
            Characteristic::OrientationTheta => "OrientationTheta",
        }
    }

    pub fn units(self) -> Units {
        match self {
            Characteristic::StraightLength | Characteristic::CurvedLength | Characteristic::Diameter => {
                Units::World
            }
            Characteristic::Volume => Units::WorldCubed,
            Characteristic::SurfaceArea => Units::WorldSquared,
            Characteristic::OrientationPhi | Characteristic::OrientationTheta => Units::Degrees,
        }
    }
}

impl fmt::Display for Characteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Characteristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Characteristic::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::input(format!("unknown characteristic `{s}`")))
    }
}

/// Characteristic values of one fiber, indexable by [`Characteristic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Characteristics([f64; Characteristic::COUNT]);

impl Characteristics {
    pub fn get(&self, c: Characteristic) -> f64 {
        self.0[c.index()]
    }

    pub fn as_array(&self) -> &[f64; Characteristic::COUNT] {
        &self.0
    }
}

impl Index<Characteristic> for Characteristics {
    type Output = f64;

    fn index(&self, c: Characteristic) -> &f64 {
        &self.0[c.index()]
    }
}

/// Computes all characteristics from the fiber's geometry.
///
/// Volume and surface area treat the fiber as a straight tube of the
/// polyline's arclength (lateral surface only). Orientation is taken from
/// the unsigned end-to-end axis: `OrientationTheta` is the inclination from
/// +z folded to `[0°, 90°]`, `OrientationPhi` the azimuth in `[0°, 360°)`
/// (in `[0°, 180°)` for axes in the xy-plane). Closed fibers whose ends
/// coincide report both angles as 0.
pub fn derive_characteristics(fiber: &Fiber) -> Characteristics {
    let r = fiber.radius();
    let curved = fiber.curved_length();
    let straight = fiber.straight_length();
    let (phi, theta) = orientation(fiber);

    let mut values = [0.0; Characteristic::COUNT];
    values[Characteristic::StraightLength.index()] = straight;
    values[Characteristic::CurvedLength.index()] = curved;
    values[Characteristic::Diameter.index()] = 2.0 * r;
    values[Characteristic::Volume.index()] = PI * r * r * curved;
    values[Characteristic::SurfaceArea.index()] = 2.0 * PI * r * curved;
    values[Characteristic::OrientationPhi.index()] = phi;
    values[Characteristic::OrientationTheta.index()] = theta;
    Characteristics(values)
}

fn orientation(fiber: &Fiber) -> (f64, f64) {
    let v = fiber.vertices();
    let mut axis = v[v.len() - 1] - v[0];
    let len = axis.norm();
    if len == 0.0 {
        return (0.0, 0.0);
    }
    axis /= len;
    let flip = axis.z < 0.0 || (axis.z == 0.0 && (axis.y < 0.0 || (axis.y == 0.0 && axis.x < 0.0)));
    if flip {
        axis = -axis;
    }
    let theta = axis.z.clamp(-1.0, 1.0).acos().to_degrees();
    let mut phi = axis.y.atan2(axis.x).to_degrees();
    if phi < 0.0 {
        phi += 360.0;
    }
    if phi >= 360.0 {
        phi -= 360.0;
    }
    (phi, theta)
}
