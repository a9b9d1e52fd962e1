use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! counter_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(u64);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn from_counter(value: u64) -> Self {
                Self(value)
            }

            /// Allocation counter value this id was minted from.
            pub fn counter(self) -> u64 {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let digits = s
                    .strip_prefix($prefix)
                    .ok_or_else(|| ParseIdError(s.to_string()))?;
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(ParseIdError(s.to_string()));
                }
                // Leading zeros would make two spellings of one id.
                if digits.len() > 1 && digits.starts_with('0') {
                    return Err(ParseIdError(s.to_string()));
                }
                digits
                    .parse()
                    .map(Self)
                    .map_err(|_| ParseIdError(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

counter_id!(
    /// Identifier of a node, rendered as `n<k>`. Ordering follows allocation order.
    NodeId,
    "n"
);
counter_id!(
    /// Identifier of a sequential group, rendered as `g<k>`.
    GroupId,
    "g"
);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed identifier `{0}`")]
pub struct ParseIdError(pub String);
