//! Big-integer text encoding shared by key files and the wire format:
//! lowercase hexadecimal, no leading zeros, `"0"` for zero.

use num_bigint::BigUint;
use num_traits::Num;

use crate::error::{Error, Result};

pub fn to_hex(v: &BigUint) -> String {
    v.to_str_radix(16)
}

pub fn from_hex(s: &str) -> Result<BigUint> {
    let canonical = !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        && (s == "0" || !s.starts_with('0'));
    if !canonical {
        return Err(Error::Wire(format!("non-canonical hex integer {s:?}")));
    }
    BigUint::from_str_radix(s, 16).map_err(|e| Error::Wire(e.to_string()))
}

/// `#[serde(with = "hex_biguint")]`
pub mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_hex(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        super::from_hex(&s).map_err(D::Error::custom)
    }
}

/// `#[serde(with = "hex_vec")]` for lists of integers.
pub mod hex_vec {
    use num_bigint::BigUint;
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&super::to_hex(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| super::from_hex(s).map_err(D::Error::custom))
            .collect()
    }
}

/// Optional hex integer; `None` serializes as JSON `null`.
pub mod hex_opt {
    use num_bigint::BigUint;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_some(&super::to_hex(x)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigUint>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| super::from_hex(&s).map_err(D::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(to_hex(&BigUint::from(0u32)), "0");
        assert_eq!(to_hex(&BigUint::from(0xabcu32)), "abc");
        assert_eq!(from_hex("ff").unwrap(), BigUint::from(255u32));
        assert!(from_hex("").is_err());
        assert!(from_hex("0ff").is_err());
        assert!(from_hex("FF").is_err());
        assert!(from_hex("-1").is_err());
        assert_eq!(from_hex("0").unwrap(), BigUint::from(0u32));
    }
}
