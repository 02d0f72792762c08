//! Shared vocabulary: orders, car bodies, colors, calendar days and timestamps.
//!
//! Everything here is immutable once built. The only behavior is parsing,
//! formatting and [`validate_catalog`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::constraints::Constraint;

macro_rules! interned_tag {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(s: impl AsRef<str>) -> Self {
                Self(Arc::from(s.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Ok(Self::new(s))
            }
        }
    };
}

interned_tag!(
    /// Paint color identifier. Equality is exact identifier equality.
    ColorId
);
interned_tag!(
    /// Closed per-scenario body type tag ("limousine", "wagon", ...).
    BodyType
);

/// Catalog entry for a color: identifier plus a human readable name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorInfo {
    pub id: ColorId,
    pub name: String,
}

/// Calendar day, stored as days since 1970-01-01. Serialized as an ISO-8601 date.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(pub i32);

impl Day {
    const EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
        Some(d) => d,
        None => unreachable!(),
    };

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day).map(Day::from_naive)
    }

    fn from_naive(d: NaiveDate) -> Day {
        Day((d - Self::EPOCH).num_days() as i32)
    }

    pub fn to_naive(self) -> NaiveDate {
        Self::EPOCH + chrono::Duration::days(self.0 as i64)
    }

    pub fn parse(s: &str) -> Result<Day, chrono::ParseError> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").map(Day::from_naive)
    }

    /// First second of this day.
    pub fn start(self) -> Timestamp {
        Timestamp(self.0 as i64 * 86_400)
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

impl Serialize for Day {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Day {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Day::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Seconds since the Unix epoch.
///
/// Serialized as an integer; deserialization also accepts an RFC 3339 string.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn parse_rfc3339(s: &str) -> Result<Timestamp, chrono::ParseError> {
        DateTime::parse_from_rfc3339(s).map(|dt| Timestamp(dt.timestamp()))
    }

    pub fn to_rfc3339(self) -> String {
        DateTime::from_timestamp(self.0, 0)
            .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
            .unwrap_or_else(|| self.0.to_string())
    }

    pub fn plus_seconds(self, secs: i64) -> Timestamp {
        Timestamp(self.0 + secs)
    }

    /// Calendar day of this instant after shifting by `boundary_offset` seconds
    /// (a shift starting at 06:00 uses an offset of 21 600).
    pub fn day(self, boundary_offset: i64) -> Day {
        Day((self.0 - boundary_offset).div_euclid(86_400) as i32)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(self.0)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Secs(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Secs(v) => Ok(Timestamp(v)),
            Raw::Text(s) => Timestamp::parse_rfc3339(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// RFC 3339 string (de)serialization for timestamps, used where the file format asks for it.
pub(crate) mod rfc3339 {
    use super::Timestamp;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        Timestamp::deserialize(d)
    }
}

/// A logical build request (a "VIN").
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Order {
    pub order_id: String,
    pub body_type: BodyType,
    pub color: ColorId,
    /// Position in the original planned build sequence. Unique per scenario.
    pub blend_number: u64,
    pub due_date: Day,
    pub planned_date: Day,
    pub features: BTreeSet<String>,
}

/// A physical, partially built car waiting in the body buffer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarBody {
    pub car_id: String,
    pub body_type: BodyType,
    pub entered_at: Timestamp,
    /// The order this body was originally planned for. Substitution may hand
    /// the car a different order when it leaves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigned_order: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCatalog {
    pub orders: Vec<Order>,
    pub constraints: Vec<Constraint>,
    pub colors: Vec<ColorInfo>,
    pub body_types: Vec<BodyType>,
}

impl ScenarioCatalog {
    /// Builds a catalog whose color and body type lists are derived from the orders.
    pub fn from_orders(orders: Vec<Order>, constraints: Vec<Constraint>) -> Self {
        let colors: BTreeSet<ColorId> = orders.iter().map(|o| o.color.clone()).collect();
        let body_types: BTreeSet<BodyType> = orders.iter().map(|o| o.body_type.clone()).collect();
        ScenarioCatalog {
            orders,
            constraints,
            colors: colors
                .into_iter()
                .map(|id| ColorInfo {
                    name: id.to_string(),
                    id,
                })
                .collect(),
            body_types: body_types.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum CatalogViolation {
    DuplicateBlendNumber {
        blend_number: u64,
        order_ids: Vec<String>,
    },
    ZeroBlendNumber {
        order_id: String,
    },
    DuplicateOrderId {
        order_id: String,
    },
    UnknownColor {
        order_id: String,
        color: ColorId,
    },
    UnknownBodyType {
        order_id: String,
        body_type: BodyType,
    },
    DuplicateConstraintId {
        constraint_id: String,
    },
    InvalidConstraint {
        constraint_id: String,
        reason: String,
    },
}

impl fmt::Display for CatalogViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogViolation::DuplicateBlendNumber {
                blend_number,
                order_ids,
            } => write!(
                f,
                "blend number {blend_number} shared by orders {}",
                order_ids.join(", ")
            ),
            CatalogViolation::ZeroBlendNumber { order_id } => {
                write!(f, "order {order_id}: blend number must be positive")
            }
            CatalogViolation::DuplicateOrderId { order_id } => {
                write!(f, "order id {order_id} appears more than once")
            }
            CatalogViolation::UnknownColor { order_id, color } => {
                write!(
                    f,
                    "order {order_id}: color {color} is not in the color catalog"
                )
            }
            CatalogViolation::UnknownBodyType {
                order_id,
                body_type,
            } => write!(f, "order {order_id}: unknown body type {body_type}"),
            CatalogViolation::DuplicateConstraintId { constraint_id } => {
                write!(f, "constraint id {constraint_id} appears more than once")
            }
            CatalogViolation::InvalidConstraint {
                constraint_id,
                reason,
            } => write!(f, "constraint {constraint_id}: {reason}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<CatalogViolation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every catalog invariant. Violations are returned as data.
pub fn validate_catalog(catalog: &ScenarioCatalog) -> ValidationReport {
    let mut violations = Vec::new();

    let colors: BTreeSet<&ColorId> = catalog.colors.iter().map(|c| &c.id).collect();
    let body_types: BTreeSet<&BodyType> = catalog.body_types.iter().collect();

    let mut by_blend: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    let mut seen_ids = BTreeSet::new();
    for order in &catalog.orders {
        if !seen_ids.insert(order.order_id.as_str()) {
            violations.push(CatalogViolation::DuplicateOrderId {
                order_id: order.order_id.clone(),
            });
        }
        if order.blend_number == 0 {
            violations.push(CatalogViolation::ZeroBlendNumber {
                order_id: order.order_id.clone(),
            });
        }
        by_blend
            .entry(order.blend_number)
            .or_default()
            .push(&order.order_id);
        if !colors.contains(&order.color) {
            violations.push(CatalogViolation::UnknownColor {
                order_id: order.order_id.clone(),
                color: order.color.clone(),
            });
        }
        if !body_types.contains(&order.body_type) {
            violations.push(CatalogViolation::UnknownBodyType {
                order_id: order.order_id.clone(),
                body_type: order.body_type.clone(),
            });
        }
    }
    for (blend_number, ids) in by_blend {
        if ids.len() > 1 {
            violations.push(CatalogViolation::DuplicateBlendNumber {
                blend_number,
                order_ids: ids.into_iter().map(str::to_owned).collect(),
            });
        }
    }

    let mut seen_constraints = BTreeSet::new();
    for c in &catalog.constraints {
        if !seen_constraints.insert(c.id.as_str()) {
            violations.push(CatalogViolation::DuplicateConstraintId {
                constraint_id: c.id.clone(),
            });
        }
        if let Err(reason) = c.check() {
            violations.push(CatalogViolation::InvalidConstraint {
                constraint_id: c.id.clone(),
                reason,
            });
        }
    }

    ValidationReport { violations }
}
