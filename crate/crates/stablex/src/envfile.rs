//! Binary environment files.
//!
//! Layout: the 8-byte magic `STBLXENV`, a little-endian `u32` header length,
//! a JSON header, then the inverse conductances `γ` followed by the site
//! values of `W`, all as little-endian `f64`. The checksum is SHA-256 over
//! the header serialized with an empty checksum field, followed by the
//! payload, so any change to either is detected.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stablex_core::{Environment, Provenance, StableLaw, Window};

pub const MAGIC: &[u8; 8] = b"STBLXENV";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EnvFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not an environment file")]
    BadMagic,
    #[error("unsupported environment file version {found} (this build reads version {VERSION})")]
    Version { found: u64 },
    #[error("checksum mismatch: header records {stored}, contents hash to {actual}")]
    Checksum { stored: String, actual: String },
    #[error("malformed environment file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Env(#[from] stablex_core::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub alpha: f64,
    pub c0: f64,
    pub n: u64,
    pub window: (i64, i64),
    pub provenance: Option<Provenance>,
    pub sha256: String,
}

fn payload(env: &Environment) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (env.gamma().len() + env.cum_w().len()));
    for v in env.gamma().iter().chain(env.cum_w()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn digest(header: &Header, payload: &[u8]) -> String {
    let blank = Header {
        sha256: String::new(),
        ..header.clone()
    };
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&blank).expect("header serializes"));
    h.update(payload);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn header_of(env: &Environment) -> Header {
    let w = env.window();
    let mut header = Header {
        version: VERSION,
        alpha: env.law().alpha(),
        c0: env.law().c0(),
        n: env.n(),
        window: (w.lo, w.hi),
        provenance: env.provenance(),
        sha256: String::new(),
    };
    header.sha256 = digest(&header, &payload(env));
    header
}

pub fn write_environment<W: Write>(env: &Environment, mut out: W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&header_of(env)).expect("header serializes");
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(&header)?;
    out.write_all(&payload(env))?;
    out.flush()
}

/// Reads an environment. The law, level and window come from the file.
pub fn read_environment<R: Read>(mut input: R) -> Result<(Environment, Header), EnvFileError> {
    let io = |source| EnvFileError::Io {
        path: "<stream>".into(),
        source,
    };
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(EnvFileError::BadMagic);
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err(EnvFileError::Malformed("truncated header".into()));
    }
    let (raw, data) = body.split_at(len);
    // The version is checked before the rest so that newer layouts give a
    // clear error rather than a schema complaint.
    let value: serde_json::Value = serde_json::from_slice(raw).map_err(|e| EnvFileError::Malformed(e.to_string()))?;
    let found = value.get("version").and_then(|v| v.as_u64());
    match found {
        Some(v) if v == u64::from(VERSION) => {}
        Some(v) => return Err(EnvFileError::Version { found: v }),
        None => return Err(EnvFileError::Malformed("header has no version".into())),
    }
    let header: Header = serde_json::from_value(value).map_err(|e| EnvFileError::Malformed(e.to_string()))?;
    let actual = digest(&header, data);
    if actual != header.sha256 {
        return Err(EnvFileError::Checksum {
            stored: header.sha256,
            actual,
        });
    }
    let window = Window::new(header.window.0, header.window.1)?;
    let (bonds, sites) = (window.bonds(), window.sites());
    if data.len() != 8 * (bonds + sites) {
        return Err(EnvFileError::Malformed(format!(
            "payload holds {} bytes, window needs {}",
            data.len(),
            8 * (bonds + sites)
        )));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let gamma: Vec<f64> = values.by_ref().take(bonds).collect();
    let cum_w: Vec<f64> = values.collect();
    let law = StableLaw::new(header.alpha, header.c0)?;
    let env = Environment::from_parts(law, header.n, window, gamma, cum_w, header.provenance)?;
    Ok((env, header))
}

pub fn save_environment(env: &Environment, path: &Path) -> Result<(), EnvFileError> {
    let io = |source| EnvFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    write_environment(env, &mut buf).map_err(io)?;
    fs::write(path, buf).map_err(io)
}

pub fn load_environment(path: &Path) -> Result<(Environment, Header), EnvFileError> {
    let file = fs::File::open(path).map_err(|source| EnvFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_environment(std::io::BufReader::new(file))
}
