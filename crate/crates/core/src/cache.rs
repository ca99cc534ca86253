//! Versioned binary cache files: an 8-byte magic tag, a little-endian `u32`
//! format version, then a bincode payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn to_bytes<T: Serialize>(magic: &[u8; 8], version: u32, value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.write_u32::<LittleEndian>(version)
        .expect("write to vec");
    bincode::serialize_into(&mut out, value).map_err(|e| Error::Format(e.to_string()))?;
    Ok(out)
}

pub fn from_bytes<T: DeserializeOwned>(magic: &[u8; 8], version: u32, mut bytes: &[u8]) -> Result<T> {
    read_from(magic, version, &mut bytes)
}

fn read_from<T: DeserializeOwned, R: Read>(magic: &[u8; 8], version: u32, reader: &mut R) -> Result<T> {
    let mut tag = [0u8; 8];
    reader
        .read_exact(&mut tag)
        .map_err(|_| Error::Format("truncated cache header".into()))?;
    if &tag != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&tag),
            String::from_utf8_lossy(magic)
        )));
    }
    let found = reader
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Format("truncated cache header".into()))?;
    if found != version {
        return Err(Error::Format(format!(
            "unsupported cache version {found}, expected {version}"
        )));
    }
    bincode::deserialize_from(reader).map_err(|e| Error::Format(e.to_string()))
}

pub fn write<T: Serialize>(path: &Path, magic: &[u8; 8], version: u32, value: &T) -> Result<()> {
    let bytes = to_bytes(magic, version, value)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read<T: DeserializeOwned>(path: &Path, magic: &[u8; 8], version: u32) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(magic, version, &mut BufReader::new(file))
}
