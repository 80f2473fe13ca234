//! POSIX-style ownership and mode bits.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A user acting on the filesystem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub user: String,
    pub groups: BTreeSet<String>,
}

impl Principal {
    pub fn new(user: impl Into<String>, groups: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let user = user.into();
        assert!(!user.is_empty(), "principal user must be nonempty");
        Principal {
            user,
            groups: groups.into_iter().map(Into::into).collect(),
        }
    }

    /// The operator account: user `hduser` in group `hadoop`.
    pub fn hduser() -> Self {
        Principal::new("hduser", ["hadoop"])
    }

    pub fn in_group(&self, group: &str) -> bool {
        self.groups.contains(group)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Read,
    Write,
    Execute,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Read, Action::Write, Action::Execute];

    fn bit(self) -> u16 {
        match self {
            Action::Read => 0o4,
            Action::Write => 0o2,
            Action::Execute => 0o1,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Read => "read",
            Action::Write => "write",
            Action::Execute => "execute",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Allow,
    Deny,
}

impl Access {
    pub fn is_allowed(self) -> bool {
        self == Access::Allow
    }
}

/// Which permission class applies to a principal for an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Owner,
    Group,
    Other,
}

/// Owner/group/other permission triple, stored as the low nine mode bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode(u16);

impl Mode {
    pub const fn new(bits: u16) -> Mode {
        Mode(bits & 0o777)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn class_bits(self, class: Class) -> u16 {
        match class {
            Class::Owner => (self.0 >> 6) & 0o7,
            Class::Group => (self.0 >> 3) & 0o7,
            Class::Other => self.0 & 0o7,
        }
    }

    pub fn allows(self, class: Class, action: Action) -> bool {
        self.class_bits(class) & action.bit() != 0
    }

    /// Three-digit octal form, e.g. `"750"`.
    pub fn octal(self) -> String {
        format!("{:03o}", self.0)
    }
}

/// `rwxr-x---` style rendering.
impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for class in [Class::Owner, Class::Group, Class::Other] {
            let b = self.class_bits(class);
            let r = if b & 4 != 0 { 'r' } else { '-' };
            let w = if b & 2 != 0 { 'w' } else { '-' };
            let x = if b & 1 != 0 { 'x' } else { '-' };
            write!(f, "{r}{w}{x}")?;
        }
        Ok(())
    }
}

impl FromStr for Mode {
    type Err = String;

    /// Parses a 3-digit octal mode (a leading `0` is tolerated).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim();
        let digits = if digits.len() == 4 {
            digits.strip_prefix('0').unwrap_or(digits)
        } else {
            digits
        };
        if digits.len() != 3 || !digits.bytes().all(|b| (b'0'..=b'7').contains(&b)) {
            return Err(format!("mode must be three octal digits, got {s:?}"));
        }
        u16::from_str_radix(digits, 8)
            .map(Mode::new)
            .map_err(|e| e.to_string())
    }
}

/// POSIX class selection: owner bits if the principal owns the entry, else
/// group bits if it belongs to the entry's group, else other bits. Only the
/// selected class is consulted.
pub fn select_class(owner: &str, group: &str, principal: &Principal) -> Class {
    if principal.user == owner {
        Class::Owner
    } else if principal.in_group(group) {
        Class::Group
    } else {
        Class::Other
    }
}

pub fn check_access(
    owner: &str,
    group: &str,
    mode: Mode,
    principal: &Principal,
    action: Action,
) -> Access {
    if mode.allows(select_class(owner, group, principal), action) {
        Access::Allow
    } else {
        Access::Deny
    }
}
