//! Files the CLI reads and writes: ring configs, parameter sets, keys.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use overlap_core::cipher::SecretKey;
use overlap_core::group::ParamsFile;
use overlap_core::{BigUint, GroupParams};
use serde::{Deserialize, Serialize};

/// Ring membership file shared by every participant.
///
/// ```toml
/// params = "toy-64"
///
/// [[party]]
/// id = "alice"
/// address = "127.0.0.1:7101"
///
/// [mediator]
/// address = "127.0.0.1:7100"
///
/// [sum]
/// modulus = "18446744073709551616"
/// value_bound = "4294967295"
/// ```
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RingFile {
    pub params: Option<String>,
    #[serde(rename = "party")]
    pub parties: Vec<PartyEntry>,
    pub mediator: Option<MediatorEntry>,
    pub sum: Option<SumEntry>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PartyEntry {
    pub id: String,
    pub address: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MediatorEntry {
    pub address: String,
}

/// Decimal strings, so moduli beyond 64 bits fit.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SumEntry {
    pub modulus: Option<String>,
    pub value_bound: Option<String>,
}

impl RingFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading ring config {}", path.display()))?;
        let ring: RingFile = toml::from_str(&text).with_context(|| format!("parsing ring config {}", path.display()))?;
        if ring.parties.is_empty() {
            bail!("ring config lists no parties");
        }
        Ok(ring)
    }

    pub fn ids(&self) -> Vec<String> {
        self.parties.iter().map(|p| p.id.clone()).collect()
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.parties
            .iter()
            .position(|p| p.id == id)
            .with_context(|| format!("party {id:?} is not in the ring"))
    }

    /// Addresses in network-index order: ring members, then the mediator.
    pub fn addresses(&self) -> Vec<String> {
        self.parties
            .iter()
            .map(|p| p.address.clone())
            .chain(self.mediator.iter().map(|m| m.address.clone()))
            .collect()
    }

    /// `(modulus, value_bound)`, defaulting to 2^64 and 2^32 - 1.
    pub fn sum_bounds(&self) -> Result<(BigUint, BigUint)> {
        let entry = self.sum.clone().unwrap_or(SumEntry {
            modulus: None,
            value_bound: None,
        });
        let modulus = match entry.modulus {
            Some(m) => parse_big(&m).context("sum.modulus")?,
            None => BigUint::from(1u8) << 64,
        };
        let bound = match entry.value_bound {
            Some(b) => parse_big(&b).context("sum.value_bound")?,
            None => BigUint::from(u32::MAX),
        };
        Ok((modulus, bound))
    }
}

pub fn parse_big(text: &str) -> Result<BigUint> {
    text.trim()
        .parse::<BigUint>()
        .map_err(|_| anyhow::anyhow!("{text:?} is not a non-negative integer"))
}

/// A named set, or a path to a parameter file written by `keygen`.
pub fn load_params(spec: &str) -> Result<GroupParams> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: ParamsFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        return GroupParams::from_file(&file).with_context(|| format!("validating {}", path.display()));
    }
    GroupParams::named(spec).with_context(|| format!("unknown parameter set or file {spec:?}"))
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    /// Hex fingerprint of the parameter set the key belongs to.
    pub params_fingerprint: String,
    pub exponent: String,
}

pub fn save_key(path: &Path, params: &GroupParams, key: &SecretKey) -> Result<()> {
    let file = KeyFile {
        params_fingerprint: hex::encode(params.fingerprint()),
        exponent: key.exponent().to_str_radix(16),
    };
    fs::write(path, toml::to_string(&file)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load_key(path: &Path, params: &GroupParams) -> Result<SecretKey> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: KeyFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.params_fingerprint != hex::encode(params.fingerprint()) {
        bail!("key {} belongs to a different parameter set", path.display());
    }
    let exponent = BigUint::parse_bytes(file.exponent.as_bytes(), 16).context("key exponent is not hex")?;
    Ok(SecretKey::from_exponent(params, exponent)?)
}

pub struct KeygenPaths {
    pub params: PathBuf,
    pub key: PathBuf,
}

impl KeygenPaths {
    pub fn in_dir(dir: &Path) -> Self {
        KeygenPaths {
            params: dir.join("params.toml"),
            key: dir.join("key.toml"),
        }
    }
}

pub fn save_params(path: &Path, params: &GroupParams) -> Result<()> {
    fs::write(path, toml::to_string(&params.to_file())?).with_context(|| format!("writing {}", path.display()))
}

/// One item per line; trailing newline characters are not part of items.
pub fn load_items(path: &Path) -> Result<Vec<Vec<u8>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading items {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.as_bytes().to_vec())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_file_parses() {
        let ring: RingFile = toml::from_str(
            r#"
            params = "toy-64"
            [[party]]
            id = "a"
            address = "127.0.0.1:1"
            [[party]]
            id = "b"
            address = "127.0.0.1:2"
            [mediator]
            address = "127.0.0.1:3"
            "#,
        )
        .unwrap();
        assert_eq!(ring.ids(), vec!["a", "b"]);
        assert_eq!(ring.position("b").unwrap(), 1);
        assert!(ring.position("c").is_err());
        assert_eq!(ring.addresses().len(), 3);
        let (m, b) = ring.sum_bounds().unwrap();
        assert_eq!(m, BigUint::from(1u8) << 64);
        assert_eq!(b, BigUint::from(u32::MAX));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(toml::from_str::<RingFile>("party = []\nextra = 1").is_err());
    }

    #[test]
    fn key_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params = GroupParams::named("toy-64").unwrap();
        let key = SecretKey::from_exponent(&params, BigUint::from(777u32)).unwrap();
        let path = dir.path().join("k.toml");
        save_key(&path, &params, &key).unwrap();
        assert_eq!(load_key(&path, &params).unwrap().exponent(), key.exponent());
        let other = GroupParams::named("test-512").unwrap();
        assert!(load_key(&path, &other).is_err());
    }
}
