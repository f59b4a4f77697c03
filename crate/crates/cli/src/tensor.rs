//! The tensor container format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "MPT1"
//! 4       1           dtype code (1 = FP16)
//! 5       1           rank
//! 6       4 * rank    dims, u32 each
//! ...     2 * prod    payload, u16 FP16 patterns
//! ```

use crate::CliError;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"MPT1";
pub const DTYPE_FP16: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorFile {
    pub dims: Vec<u32>,
    pub data: Vec<u16>,
}

impl TensorFile {
    pub fn new(dims: Vec<u32>, data: Vec<u16>) -> Result<Self, CliError> {
        let expected: u64 = dims.iter().map(|&d| d as u64).product();
        if expected != data.len() as u64 {
            return Err(CliError::Config(format!(
                "tensor dims {:?} imply {} elements, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn read_from(path: &Path) -> Result<Self, CliError> {
        let mut file = std::fs::File::open(path)
            .map_err(|e| CliError::Io(format!("opening {}: {e}", path.display())))?;
        let mut header = [0u8; 6];
        file.read_exact(&mut header)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        if &header[0..4] != MAGIC {
            return Err(CliError::Config(format!("{} is not a tensor file", path.display())));
        }
        if header[4] != DTYPE_FP16 {
            return Err(CliError::Config(format!("unsupported dtype code {}", header[4])));
        }
        let rank = header[5] as usize;
        let mut dim_bytes = vec![0u8; 4 * rank];
        file.read_exact(&mut dim_bytes).map_err(|e| CliError::Io(e.to_string()))?;
        let dims: Vec<u32> = dim_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let count: u64 = dims.iter().map(|&d| d as u64).product();
        let mut payload = Vec::new();
        file.read_to_end(&mut payload).map_err(|e| CliError::Io(e.to_string()))?;
        if payload.len() as u64 != 2 * count {
            return Err(CliError::Config(format!(
                "payload is {} bytes, dims {:?} require {}",
                payload.len(),
                dims,
                2 * count
            )));
        }
        let data: Vec<u16> =
            payload.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        Ok(TensorFile { dims, data })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), CliError> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 2 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_FP16);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
        file.write_all(&out).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(())
    }
}
