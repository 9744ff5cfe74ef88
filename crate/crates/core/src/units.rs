//! Physical dimensions, the unit registry and unit-tagged quantities.
//!
//! Dimensions are tracked over four bases: length, mass, time and a separate
//! `angle` pseudo-dimension. Keeping angle apart from "dimensionless" is what
//! makes `"30"` supplied for a friction angle a rejected input instead of a
//! silent 30 radians.
//!
//! The registry is data: the bundled table lives in `units.json` and any other
//! table with the same shape can be loaded with [`UnitRegistry::from_json`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Div, Mul};
use std::sync::OnceLock;

use num_rational::Rational32;
use serde::{Deserialize, Serialize};

/// Signed rational exponent of one base dimension.
pub type Exponent = Rational32;

const BUNDLED_UNITS: &str = include_str!("../units.json");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UnitError {
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("malformed quantity `{0}`: expected `<number> <unit>` or a bare number")]
    MalformedQuantity(String),
    #[error("dimension mismatch: cannot convert {source_dim} to {target_dim}")]
    DimensionMismatch {
        source_dim: Dimension,
        target_dim: Dimension,
    },
    #[error("invalid unit table: {0}")]
    InvalidTable(String),
}

/// Exponent vector over the base dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Dimension {
    pub length: Exponent,
    pub mass: Exponent,
    pub time: Exponent,
    pub angle: Exponent,
}

impl Dimension {
    pub const DIMENSIONLESS: Dimension = Dimension {
        length: Rational32::new_raw(0, 1),
        mass: Rational32::new_raw(0, 1),
        time: Rational32::new_raw(0, 1),
        angle: Rational32::new_raw(0, 1),
    };

    pub fn new(length: i32, mass: i32, time: i32, angle: i32) -> Self {
        Dimension {
            length: Exponent::from_integer(length),
            mass: Exponent::from_integer(mass),
            time: Exponent::from_integer(time),
            angle: Exponent::from_integer(angle),
        }
    }

    pub fn length() -> Self {
        Self::new(1, 0, 0, 0)
    }

    pub fn angle() -> Self {
        Self::new(0, 0, 0, 1)
    }

    pub fn pressure() -> Self {
        Self::new(-1, 1, -2, 0)
    }

    pub fn force() -> Self {
        Self::new(1, 1, -2, 0)
    }

    pub fn unit_weight() -> Self {
        Self::new(-2, 1, -2, 0)
    }

    pub fn is_dimensionless(&self) -> bool {
        *self == Self::DIMENSIONLESS
    }

    pub fn inv(self) -> Self {
        Dimension {
            length: -self.length,
            mass: -self.mass,
            time: -self.time,
            angle: -self.angle,
        }
    }

    pub fn pow(self, exponent: Exponent) -> Self {
        Dimension {
            length: self.length * exponent,
            mass: self.mass * exponent,
            time: self.time * exponent,
            angle: self.angle * exponent,
        }
    }

    /// The same dimension with the angle exponent dropped. Radians are
    /// dimensionless in SI, so equation-level consistency checks compare
    /// dimensions in this form.
    pub fn without_angle(self) -> Self {
        Dimension {
            angle: Exponent::from_integer(0),
            ..self
        }
    }

    fn components(&self) -> [(&'static str, Exponent); 4] {
        [
            ("length", self.length),
            ("mass", self.mass),
            ("time", self.time),
            ("angle", self.angle),
        ]
    }
}

impl Mul for Dimension {
    type Output = Dimension;

    fn mul(self, rhs: Dimension) -> Dimension {
        Dimension {
            length: self.length + rhs.length,
            mass: self.mass + rhs.mass,
            time: self.time + rhs.time,
            angle: self.angle + rhs.angle,
        }
    }
}

impl Div for Dimension {
    type Output = Dimension;

    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Dimension) -> Dimension {
        self * rhs.inv()
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("dimensionless");
        }
        let mut first = true;
        for (name, exp) in self.components() {
            if exp == Exponent::from_integer(0) {
                continue;
            }
            if !first {
                f.write_str("·")?;
            }
            first = false;
            if exp == Exponent::from_integer(1) {
                write!(f, "{name}")?;
            } else {
                write!(f, "{name}^{exp}")?;
            }
        }
        Ok(())
    }
}

/// True iff the two exponent vectors are equal.
pub fn check_dimension(lhs: Dimension, rhs: Dimension) -> bool {
    lhs == rhs
}

// Table representation: integer exponents or "p/q" strings, absent = 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Int(i32),
    Text(String),
}

impl ExponentRepr {
    fn to_exponent(&self) -> Result<Exponent, UnitError> {
        match self {
            ExponentRepr::Int(n) => Ok(Exponent::from_integer(*n)),
            ExponentRepr::Text(s) => s
                .trim()
                .parse::<Exponent>()
                .map_err(|_| UnitError::InvalidTable(format!("bad exponent `{s}`"))),
        }
    }

    fn from_exponent(e: Exponent) -> Option<Self> {
        if e == Exponent::from_integer(0) {
            None
        } else if e.is_integer() {
            Some(ExponentRepr::Int(e.to_integer()))
        } else {
            Some(ExponentRepr::Text(e.to_string()))
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimensionRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<ExponentRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<ExponentRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time: Option<ExponentRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle: Option<ExponentRepr>,
}

impl TryFrom<DimensionRepr> for Dimension {
    type Error = UnitError;

    fn try_from(repr: DimensionRepr) -> Result<Self, UnitError> {
        let get = |e: &Option<ExponentRepr>| {
            e.as_ref()
                .map(ExponentRepr::to_exponent)
                .unwrap_or(Ok(Exponent::from_integer(0)))
        };
        Ok(Dimension {
            length: get(&repr.length)?,
            mass: get(&repr.mass)?,
            time: get(&repr.time)?,
            angle: get(&repr.angle)?,
        })
    }
}

impl From<Dimension> for DimensionRepr {
    fn from(d: Dimension) -> Self {
        DimensionRepr {
            length: ExponentRepr::from_exponent(d.length),
            mass: ExponentRepr::from_exponent(d.mass),
            time: ExponentRepr::from_exponent(d.time),
            angle: ExponentRepr::from_exponent(d.angle),
        }
    }
}

impl Serialize for Dimension {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DimensionRepr::from(*self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = DimensionRepr::deserialize(deserializer)?;
        Dimension::try_from(repr).map_err(serde::de::Error::custom)
    }
}

/// A named unit: its dimension and scale relative to the base unit of that
/// dimension (m, kg, s, rad and products thereof).
#[derive(Clone, Debug, PartialEq)]
pub struct Unit {
    name: String,
    dimension: Dimension,
    scale: f64,
}

impl Unit {
    pub fn new(name: impl Into<String>, dimension: Dimension, scale: f64) -> Result<Self, UnitError> {
        let name = name.into();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(UnitError::InvalidTable(format!(
                "unit `{name}` has non-positive scale {scale}"
            )));
        }
        Ok(Unit {
            name,
            dimension,
            scale,
        })
    }

    pub fn dimensionless() -> Self {
        Unit {
            name: "dimensionless".to_owned(),
            dimension: Dimension::DIMENSIONLESS,
            scale: 1.0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// A magnitude tagged with a unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Quantity {
    pub magnitude: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(magnitude: f64, unit: Unit) -> Self {
        Quantity { magnitude, unit }
    }

    pub fn dimensionless(magnitude: f64) -> Self {
        Quantity::new(magnitude, Unit::dimensionless())
    }

    pub fn dimension(&self) -> Dimension {
        self.unit.dimension
    }

    /// Magnitude expressed in base units of its dimension.
    pub fn base_magnitude(&self) -> f64 {
        self.magnitude * self.unit.scale
    }

    pub fn add(&self, other: &Quantity) -> Result<Quantity, UnitError> {
        let other = convert(other, &self.unit)?;
        Ok(Quantity::new(self.magnitude + other.magnitude, self.unit.clone()))
    }

    pub fn sub(&self, other: &Quantity) -> Result<Quantity, UnitError> {
        let other = convert(other, &self.unit)?;
        Ok(Quantity::new(self.magnitude - other.magnitude, self.unit.clone()))
    }

    pub fn mul(&self, other: &Quantity) -> Quantity {
        let unit = Unit {
            name: format!("{}*{}", self.unit.name, other.unit.name),
            dimension: self.unit.dimension * other.unit.dimension,
            scale: self.unit.scale * other.unit.scale,
        };
        Quantity::new(self.magnitude * other.magnitude, unit)
    }

    pub fn div(&self, other: &Quantity) -> Quantity {
        let unit = Unit {
            name: format!("{}/({})", self.unit.name, other.unit.name),
            dimension: self.unit.dimension / other.unit.dimension,
            scale: self.unit.scale / other.unit.scale,
        };
        Quantity::new(self.magnitude / other.magnitude, unit)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.magnitude, self.unit.name)
    }
}

/// Express `q` in `target`, preserving the physical value.
pub fn convert(q: &Quantity, target: &Unit) -> Result<Quantity, UnitError> {
    if !check_dimension(q.unit.dimension, target.dimension) {
        return Err(UnitError::DimensionMismatch {
            source_dim: q.unit.dimension,
            target_dim: target.dimension,
        });
    }
    if q.unit.name == target.name && q.unit.scale == target.scale {
        return Ok(Quantity::new(q.magnitude, target.clone()));
    }
    Ok(Quantity::new(
        q.magnitude * (q.unit.scale / target.scale),
        target.clone(),
    ))
}

/// Renders a quantity so that [`UnitRegistry::parse_quantity`] reads it back
/// exactly.
pub fn format_quantity(q: &Quantity) -> String {
    q.to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitEntry {
    name: String,
    dimension: Dimension,
    scale: f64,
    #[serde(default)]
    aliases: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitTable {
    units: Vec<UnitEntry>,
}

/// Immutable name → unit lookup with aliases.
#[derive(Debug, Clone)]
pub struct UnitRegistry {
    units: BTreeMap<String, Unit>,
    aliases: BTreeMap<String, String>,
}

impl UnitRegistry {
    pub fn from_json(text: &str) -> Result<Self, UnitError> {
        let table: UnitTable =
            serde_json::from_str(text).map_err(|e| UnitError::InvalidTable(e.to_string()))?;
        let mut units = BTreeMap::new();
        let mut aliases = BTreeMap::new();
        for entry in table.units {
            let unit = Unit::new(entry.name.clone(), entry.dimension, entry.scale)?;
            if units.insert(entry.name.clone(), unit).is_some() {
                return Err(UnitError::InvalidTable(format!(
                    "duplicate unit `{}`",
                    entry.name
                )));
            }
            for alias in entry.aliases {
                if aliases.insert(alias.clone(), entry.name.clone()).is_some() {
                    return Err(UnitError::InvalidTable(format!("duplicate alias `{alias}`")));
                }
            }
        }
        if let Some(clash) = aliases.keys().find(|a| units.contains_key(*a)) {
            return Err(UnitError::InvalidTable(format!(
                "alias `{clash}` shadows a unit name"
            )));
        }
        Ok(UnitRegistry { units, aliases })
    }

    /// The registry shipped with the crate.
    pub fn bundled() -> &'static UnitRegistry {
        static REGISTRY: OnceLock<UnitRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            UnitRegistry::from_json(BUNDLED_UNITS).expect("bundled unit table is valid")
        })
    }

    /// Case-sensitive lookup by canonical name or alias.
    pub fn resolve(&self, name: &str) -> Result<&Unit, UnitError> {
        let name = name.trim();
        let canonical = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.units
            .get(canonical)
            .ok_or_else(|| UnitError::UnknownUnit(name.to_owned()))
    }

    pub fn units(&self) -> impl Iterator<Item = &Unit> {
        self.units.values()
    }

    /// Parses `<number> <unit>` or a bare number (dimensionless).
    pub fn parse_quantity(&self, text: &str) -> Result<Quantity, UnitError> {
        let trimmed = text.trim();
        let split = number_prefix_len(trimmed);
        if split == 0 {
            return Err(UnitError::MalformedQuantity(text.to_owned()));
        }
        let (number, rest) = trimmed.split_at(split);
        let magnitude: f64 = number
            .parse()
            .map_err(|_| UnitError::MalformedQuantity(text.to_owned()))?;
        if !magnitude.is_finite() {
            return Err(UnitError::MalformedQuantity(text.to_owned()));
        }
        let unit_name = rest.trim();
        let unit = if unit_name.is_empty() {
            Unit::dimensionless()
        } else {
            self.resolve(unit_name)?.clone()
        };
        Ok(Quantity::new(magnitude, unit))
    }
}

/// Length of the leading decimal-number token (sign, digits, fraction, exponent).
fn number_prefix_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - frac_start;
    }
    if digits == 0 {
        return 0;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    i
}

/// Convenience: parse with the bundled registry.
pub fn parse_quantity(text: &str) -> Result<Quantity, UnitError> {
    UnitRegistry::bundled().parse_quantity(text)
}
