//! Opaque, server-assigned identifiers.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! opaque_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Self {
                Self(value.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(value: &str) -> Self {
                Self(value.to_owned())
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

opaque_id!(
    /// Identifies a session; unique within a session store.
    SessionId
);
opaque_id!(
    /// Identifies a team. Team ids are globally routable, so they embed the session id.
    TeamId
);
opaque_id!(MemberId);
opaque_id!(PaperId);

impl TeamId {
    pub(crate) fn mint(session: &SessionId, seq: u64) -> Self {
        Self(format!("{session}-t{seq}"))
    }
}

impl MemberId {
    pub(crate) fn mint(session: &SessionId, seq: u64) -> Self {
        Self(format!("{session}-m{seq}"))
    }
}

impl PaperId {
    pub(crate) fn mint(session: &SessionId, seq: u64) -> Self {
        Self(format!("{session}-p{seq}"))
    }
}
