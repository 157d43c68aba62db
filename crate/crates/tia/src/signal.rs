//! Signal-type registry: identifiers, flag values, and mask handling.
//!
//! Every signal type is identified by a lowercase string token and a 32-bit
//! flag with exactly one bit set. Flags combine into a [`SignalMask`] that
//! announces which signals a data packet carries.
//!
//! | Identifier     | Flag         |
//! |----------------|--------------|
//! | `eeg`          | `0x00000001` |
//! | `emg`          | `0x00000002` |
//! | `eog`          | `0x00000004` |
//! | `ecg`          | `0x00000008` |
//! | `hr`           | `0x00000010` |
//! | `bp`           | `0x00000020` |
//! | `button`       | `0x00000040` |
//! | `joystick`     | `0x00000080` |
//! | `sensors`      | `0x00000100` |
//! | `nirs`         | `0x00000200` |
//! | `fmri`         | `0x00000400` |
//! | `mouse`        | `0x00000800` |
//! | `mouse-button` | `0x00001000` |
//! | `user_1`       | `0x00010000` |
//! | `user_2`       | `0x00020000` |
//! | `user_3`       | `0x00040000` |
//! | `user_4`       | `0x00080000` |
//! | `undefined`    | `0x00100000` |
//! | `event`        | `0x00200000` |
//!
//! Bits `0x2000`, `0x4000`, `0x8000` and everything above `0x200000` are not
//! assigned and are rejected by strict mask validation.
//!
//! Identifiers are case sensitive: `"EEG"` is not a signal type.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// One of the defined signal types.
///
/// The variant order follows ascending flag value, so the derived `Ord`
/// matches the on-wire ordering of signal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignalType {
    Eeg,
    Emg,
    Eog,
    Ecg,
    Hr,
    Bp,
    Button,
    Joystick,
    Sensors,
    Nirs,
    Fmri,
    Mouse,
    MouseButton,
    User1,
    User2,
    User3,
    User4,
    Undefined,
    Event,
}

/// All defined signal types, ascending by flag value.
pub const ALL_SIGNAL_TYPES: [SignalType; 19] = [
    SignalType::Eeg,
    SignalType::Emg,
    SignalType::Eog,
    SignalType::Ecg,
    SignalType::Hr,
    SignalType::Bp,
    SignalType::Button,
    SignalType::Joystick,
    SignalType::Sensors,
    SignalType::Nirs,
    SignalType::Fmri,
    SignalType::Mouse,
    SignalType::MouseButton,
    SignalType::User1,
    SignalType::User2,
    SignalType::User3,
    SignalType::User4,
    SignalType::Undefined,
    SignalType::Event,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignalError {
    #[error("unknown signal identifier {0:?} (identifiers are case sensitive)")]
    UnknownIdentifier(String),
    #[error("no signal type is assigned to flag {0:#010x}")]
    UnknownFlag(u32),
    #[error("expected a single flag bit, got {0:#010x}")]
    MultipleBits(u32),
    #[error("signal mask {mask:#010x} has unassigned bits {invalid:#010x}")]
    InvalidMask { mask: u32, invalid: u32 },
}

impl SignalType {
    /// The lowercase wire identifier, e.g. `"eeg"` or `"mouse-button"`.
    pub const fn identifier(self) -> &'static str {
        match self {
            SignalType::Eeg => "eeg",
            SignalType::Emg => "emg",
            SignalType::Eog => "eog",
            SignalType::Ecg => "ecg",
            SignalType::Hr => "hr",
            SignalType::Bp => "bp",
            SignalType::Button => "button",
            SignalType::Joystick => "joystick",
            SignalType::Sensors => "sensors",
            SignalType::Nirs => "nirs",
            SignalType::Fmri => "fmri",
            SignalType::Mouse => "mouse",
            SignalType::MouseButton => "mouse-button",
            SignalType::User1 => "user_1",
            SignalType::User2 => "user_2",
            SignalType::User3 => "user_3",
            SignalType::User4 => "user_4",
            SignalType::Undefined => "undefined",
            SignalType::Event => "event",
        }
    }

    /// The flag value; exactly one bit is set.
    pub const fn flag(self) -> u32 {
        match self {
            SignalType::Eeg => 0x0000_0001,
            SignalType::Emg => 0x0000_0002,
            SignalType::Eog => 0x0000_0004,
            SignalType::Ecg => 0x0000_0008,
            SignalType::Hr => 0x0000_0010,
            SignalType::Bp => 0x0000_0020,
            SignalType::Button => 0x0000_0040,
            SignalType::Joystick => 0x0000_0080,
            SignalType::Sensors => 0x0000_0100,
            SignalType::Nirs => 0x0000_0200,
            SignalType::Fmri => 0x0000_0400,
            SignalType::Mouse => 0x0000_0800,
            SignalType::MouseButton => 0x0000_1000,
            SignalType::User1 => 0x0001_0000,
            SignalType::User2 => 0x0002_0000,
            SignalType::User3 => 0x0004_0000,
            SignalType::User4 => 0x0008_0000,
            SignalType::Undefined => 0x0010_0000,
            SignalType::Event => 0x0020_0000,
        }
    }

    /// True for signals transmitted only when their value changes
    /// (button, joystick, mouse, mouse-button) instead of at a constant rate.
    pub const fn is_aperiodic(self) -> bool {
        matches!(
            self,
            SignalType::Button | SignalType::Joystick | SignalType::Mouse | SignalType::MouseButton
        )
    }

    /// Looks up a signal type by its case-sensitive identifier.
    pub fn from_identifier(identifier: &str) -> Result<SignalType, SignalError> {
        ALL_SIGNAL_TYPES
            .iter()
            .copied()
            .find(|s| s.identifier() == identifier)
            .ok_or_else(|| SignalError::UnknownIdentifier(identifier.to_owned()))
    }

    /// Looks up a signal type by flag value. The flag must have exactly one
    /// bit set and that bit must be assigned.
    pub fn from_flag(flag: u32) -> Result<SignalType, SignalError> {
        if flag.count_ones() != 1 {
            return Err(SignalError::MultipleBits(flag));
        }
        ALL_SIGNAL_TYPES
            .iter()
            .copied()
            .find(|s| s.flag() == flag)
            .ok_or(SignalError::UnknownFlag(flag))
    }
}

impl fmt::Display for SignalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.identifier())
    }
}

impl FromStr for SignalType {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SignalType::from_identifier(s)
    }
}

impl Serialize for SignalType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.identifier())
    }
}

impl<'de> Deserialize<'de> for SignalType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        SignalType::from_identifier(&s).map_err(D::Error::custom)
    }
}

/// Union of all assigned flag bits.
pub const VALID_MASK_BITS: u32 = 0x003F_1FFF;

/// A 32-bit signal-type mask as carried in the data packet fixed header.
///
/// The newtype holds any raw value; validity is checked explicitly so that
/// callers can still look at masks containing unassigned bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SignalMask(pub u32);

impl SignalMask {
    pub const EMPTY: SignalMask = SignalMask(0);

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Bits of the mask that are not assigned to any signal type.
    pub fn invalid_bits(self) -> u32 {
        self.0 & !VALID_MASK_BITS
    }

    pub fn is_valid(self) -> bool {
        self.invalid_bits() == 0
    }

    fn require_valid(self) -> Result<(), SignalError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(SignalError::InvalidMask {
                mask: self.0,
                invalid: self.invalid_bits(),
            })
        }
    }

    /// Splits a valid mask into its signal types, ascending by flag value.
    pub fn decompose(self) -> Result<Vec<SignalType>, SignalError> {
        self.require_valid()?;
        Ok(self.decompose_lenient())
    }

    /// Like [`decompose`](Self::decompose) but silently ignores unassigned
    /// bits instead of failing. The raw mask value keeps them.
    pub fn decompose_lenient(self) -> Vec<SignalType> {
        ALL_SIGNAL_TYPES
            .iter()
            .copied()
            .filter(|s| self.0 & s.flag() != 0)
            .collect()
    }

    /// Number of signals in the mask (NoS): the population count.
    pub fn count_signals(self) -> Result<u32, SignalError> {
        self.require_valid()?;
        Ok(self.0.count_ones())
    }

    pub fn contains(self, signal: SignalType) -> bool {
        self.0 & signal.flag() != 0
    }

    /// Builds a mask from a set of signal types.
    pub fn from_signals<I: IntoIterator<Item = SignalType>>(signals: I) -> SignalMask {
        SignalMask(signals.into_iter().fold(0, |m, s| m | s.flag()))
    }
}

impl fmt::Display for SignalMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

impl From<u32> for SignalMask {
    fn from(bits: u32) -> Self {
        SignalMask(bits)
    }
}
