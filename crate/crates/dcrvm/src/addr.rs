//! 32-byte account addresses, printed as lowercase hex.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const ADDRESS_LEN: usize = 32;

/// An opaque 32-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountAddress([u8; ADDRESS_LEN]);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AddressError {
    #[error("address must be {} hex characters, got {0}", ADDRESS_LEN * 2)]
    BadLength(usize),
    #[error("address is not valid hex: {0}")]
    BadHex(String),
}

impl AccountAddress {
    pub const fn new(bytes: [u8; ADDRESS_LEN]) -> Self {
        AccountAddress(bytes)
    }

    /// Address whose 32 bytes all equal `byte`. Handy for fixtures and
    /// well-known test identities.
    pub const fn repeat(byte: u8) -> Self {
        AccountAddress([byte; ADDRESS_LEN])
    }

    pub fn from_hex(s: &str) -> Result<Self, AddressError> {
        if s.len() != ADDRESS_LEN * 2 {
            return Err(AddressError::BadLength(s.len()));
        }
        let raw = hex::decode(s).map_err(|e| AddressError::BadHex(e.to_string()))?;
        let mut bytes = [0u8; ADDRESS_LEN];
        bytes.copy_from_slice(&raw);
        Ok(AccountAddress(bytes))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; ADDRESS_LEN] {
        &self.0
    }
}

impl fmt::Display for AccountAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for AccountAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Full hex is noisy in assertion output; the first four bytes
        // identify fixture addresses at a glance.
        write!(f, "addr({}..)", &self.to_hex()[..8])
    }
}

impl FromStr for AccountAddress {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AccountAddress::from_hex(s)
    }
}
