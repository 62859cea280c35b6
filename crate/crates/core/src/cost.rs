//! Extended-real cost values.
//!
//! LQ costs are `+inf` for unstable closed loops. [`Cost`] wraps an `f64`
//! that is either finite or `+inf` (never NaN) and gives it a total order,
//! so populations can be sorted without sentinel magnitudes.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cost(f64);

impl Cost {
    pub const INFINITY: Cost = Cost(f64::INFINITY);

    /// Builds a cost. NaN and `-inf` are mapped to `+inf`.
    pub fn new(value: f64) -> Self {
        if value.is_nan() || value == f64::NEG_INFINITY {
            Cost::INFINITY
        } else {
            Cost(value)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }
}

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl From<f64> for Cost {
    fn from(value: f64) -> Self {
        Cost::new(value)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("inf")
        }
    }
}

impl Serialize for Cost {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Cost {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(Cost::new(v)),
            Repr::Str(s) if s == "inf" => Ok(Cost::INFINITY),
            Repr::Str(s) => s
                .parse::<f64>()
                .map(Cost::new)
                .map_err(|_| serde::de::Error::custom(format!("invalid cost `{s}`"))),
        }
    }
}
