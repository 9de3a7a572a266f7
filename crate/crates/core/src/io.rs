//! File formats and result output.
//!
//! Networks and properties are JSON. Result files wrap their payload in an
//! envelope carrying the command name, the effective configuration and its
//! SHA-256 hash; nothing time-dependent is written, so identical runs give
//! byte-identical files. Every write goes through a temporary file in the
//! destination directory followed by a rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Activation, Layer, Network};
use crate::properties::{parse_properties, PropertyFamily};
use crate::trainer::{Checkpoint, CheckpointMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub input_dim: usize,
    pub layers: Vec<LayerFile>,
}

impl From<&Network> for NetworkFile {
    fn from(net: &Network) -> Self {
        NetworkFile {
            input_dim: net.input_dim(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerFile {
                    weights: l.rows(),
                    bias: l.bias().to_vec(),
                    activation: l.activation().name().to_string(),
                    slope: match l.activation() {
                        Activation::LeakyRelu { slope } => Some(slope),
                        _ => None,
                    },
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkFile> for Network {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Network> {
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let act = match l.slope {
                    Some(slope) if Activation::parse(&l.activation)? == Activation::leaky(0.01)? => {
                        Activation::leaky(slope)?
                    }
                    Some(_) => {
                        return Err(Error::InvalidNetwork(format!(
                            "layer {i}: `slope` only applies to leaky_relu"
                        )))
                    }
                    None => Activation::parse(&l.activation)?,
                };
                Layer::new(l.weights, l.bias, act)
                    .map_err(|e| Error::InvalidNetwork(format!("layer {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(file.input_dim, layers)
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_network(text: &str) -> Result<Network> {
    let file: NetworkFile = parse_json(text, Path::new("<input>"))?;
    Network::try_from(file)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file: NetworkFile = parse_json(&read_text(path)?, path)?;
    Network::try_from(file).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn network_to_json(net: &Network) -> Result<String> {
    to_json(&NetworkFile::from(net))
}

pub fn save_network(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    write_atomic(path, network_to_json(net)?.as_bytes())
}

pub fn properties_to_json(family: &PropertyFamily) -> Result<String> {
    to_json(family)
}

pub fn save_properties(path: impl AsRef<Path>, family: &PropertyFamily) -> Result<()> {
    write_atomic(path, properties_to_json(family)?.as_bytes())
}

pub use crate::properties::load_properties;

/// Same as [`load_properties`], for text already in memory.
pub fn parse_property_file(text: &str) -> Result<PropertyFamily> {
    parse_properties(text)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Contract(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the compact JSON encoding of a configuration, with object keys in
/// sorted order.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let err = |e: serde_json::Error| Error::Contract(format!("serialization failed: {e}"));
    let canonical = serde_json::to_value(config).map_err(err)?;
    let bytes = serde_json::to_vec(&canonical).map_err(err)?;
    Ok(sha256_hex(&bytes))
}

/// Content digest of an input file, recorded in result configs.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<C, R> {
    pub command: String,
    pub config_hash: String,
    pub config: C,
    pub result: R,
}

impl<C: Serialize, R> Envelope<C, R> {
    pub fn new(command: &str, config: C, result: R) -> Result<Self> {
        Ok(Envelope {
            command: command.to_string(),
            config_hash: config_hash(&config)?,
            config,
            result,
        })
    }
}

impl<C: Serialize, R: Serialize> Envelope<C, R> {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, to_json(self)?.as_bytes())
    }
}

/// Recomputes the hash of a result file's recorded config and compares it to
/// the stored one.
pub fn verify_provenance(text: &str) -> Result<bool> {
    let value: serde_json::Value = parse_json(text, Path::new("<result>"))?;
    let stored = value
        .get("config_hash")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Contract("result file has no config_hash".into()))?;
    let config = value
        .get("config")
        .ok_or_else(|| Error::Contract("result file has no config".into()))?;
    Ok(config_hash(config)? == stored)
}

/// One compact JSON document per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(
            &serde_json::to_string(item)
                .map_err(|e| Error::Contract(format!("serialization failed: {e}")))?,
        );
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(items)?.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Saves a checkpoint as `<stem>.json` plus `<stem>.meta.json`.
pub fn save_checkpoint(dir: impl AsRef<Path>, stem: &str, ckpt: &Checkpoint) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let net_path = dir.join(format!("{stem}.json"));
    save_network(&net_path, &ckpt.net)?;
    write_atomic(dir.join(format!("{stem}.meta.json")), to_json(&ckpt.meta)?.as_bytes())?;
    Ok(net_path)
}

pub fn load_checkpoint(net_path: impl AsRef<Path>) -> Result<Checkpoint> {
    let net_path = net_path.as_ref();
    let net = load_network(net_path)?;
    let meta_path = net_path.with_extension("meta.json");
    let meta: CheckpointMeta = parse_json(&read_text(&meta_path)?, &meta_path)?;
    Ok(Checkpoint { net, meta })
}
