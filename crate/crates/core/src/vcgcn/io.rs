use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::network::{VcGcnConfig, VcGcnParams};
use crate::error::{Error, Result};
use crate::io_util::split_header;

const MAGIC: &str = "VCGCN 1";

impl VcGcnParams {
    /// Architecture header, then every tensor row-major as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut header = String::new();
        let _ = writeln!(header, "{MAGIC}");
        let _ = writeln!(header, "channels {}", c.channels);
        let _ = writeln!(header, "hidden {}", c.hidden);
        let _ = writeln!(header, "query {}", c.query);
        let _ = writeln!(header, "blocks {}", c.blocks);
        let _ = writeln!(header, "layers {}", c.layers);
        let _ = writeln!(header, "activation {}", c.activation);
        let _ = writeln!(header, "data f64le");
        let mut out = header.into_bytes();
        for t in self.tensors() {
            for r in 0..t.nrows() {
                for col in 0..t.ncols() {
                    out.extend_from_slice(&t[(r, col)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, body) = split_header(bytes)?;
        let mut lines = header.lines().enumerate();
        if lines.next().map(|(_, l)| l) != Some(MAGIC) {
            return Err(Error::Parse { line: 1, message: format!("expected {MAGIC:?}") });
        }
        let mut config = VcGcnConfig::default();
        for (i, line) in lines {
            let err = |m: String| Error::Parse { line: i + 1, message: m };
            let (key, value) = line.split_once(' ').ok_or_else(|| err(format!("expected `key value`, got {line:?}")))?;
            let number = || value.trim().parse::<usize>().map_err(|_| err(format!("bad {key} value {value:?}")));
            match key {
                "channels" => config.channels = number()?,
                "hidden" => config.hidden = number()?,
                "query" => config.query = number()?,
                "blocks" => config.blocks = number()?,
                "layers" => config.layers = number()?,
                "activation" => config.activation = value.trim().parse()?,
                other => return Err(err(format!("unknown header key {other:?}"))),
            }
        }
        let mut params = Self::zeros(config)?;
        let expected = 8 * params.parameter_count();
        if body.len() != expected {
            return Err(Error::Format(format!("parameter payload has {} bytes, expected {expected}", body.len())));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for t in params.tensors_mut() {
            for r in 0..t.nrows() {
                for col in 0..t.ncols() {
                    t[(r, col)] = values.next().expect("length checked");
                }
            }
        }
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vcgcn::Activation;

    #[test]
    fn round_trip_is_exact() {
        let config = VcGcnConfig { channels: 5, hidden: 7, query: 3, blocks: 2, layers: 1, activation: Activation::Tanh };
        let mut params = VcGcnParams::random(config, 4).unwrap();
        params.randomize_head(5);
        let back = VcGcnParams::from_bytes(&params.to_bytes()).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let params = VcGcnParams::random(VcGcnConfig::default(), 1).unwrap();
        let mut bytes = params.to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(VcGcnParams::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
