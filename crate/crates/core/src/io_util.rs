//! Shared helpers for the text-header + binary-payload file formats.

use crate::error::{Error, Result};

/// Splits a `header ... data <kind>\n` + binary payload file.
pub fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let mut start = 0;
    while start < bytes.len() {
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .ok_or_else(|| Error::Format("header is not terminated by a data line".into()))?;
        if bytes[start..end].starts_with(b"data ") {
            let header = std::str::from_utf8(&bytes[..start])
                .map_err(|_| Error::Format("header is not valid UTF-8".into()))?;
            return Ok((header, &bytes[end + 1..]));
        }
        start = end + 1;
    }
    Err(Error::Format("header is not terminated by a data line".into()))
}

