//! State snapshot files: one line of JSON header followed by the raw
//! little-endian `f64` values of `(u, v, h)` in row-major order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::SweParams;
use super::state::SweState;
use crate::error::{DdvarError, Result};
use crate::spacetime::SpaceTimeGrid;

const MAGIC: &str = "ddvar-snapshot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    grid: SpaceTimeGrid,
    params: SweParams,
    /// Time level the state belongs to.
    level: usize,
    values: usize,
}

/// A state together with the grid and parameters it was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: SpaceTimeGrid,
    pub params: SweParams,
    pub level: usize,
    pub state: SweState,
}

impl Snapshot {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format: MAGIC.to_string(),
            grid: self.grid,
            params: self.params,
            level: self.level,
            values: self.state.data.len(),
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        out.reserve(8 * self.state.data.len());
        for v in &self.state.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut r = BufReader::new(reader);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.format != MAGIC {
            return Err(DdvarError::Io(format!(
                "unrecognised snapshot format `{}`",
                header.format
            )));
        }
        if header.values != header.grid.state_len() {
            return Err(DdvarError::Dimension(format!(
                "snapshot holds {} values, grid needs {}",
                header.values,
                header.grid.state_len()
            )));
        }
        let mut buf = vec![0u8; 8 * header.values];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
            .collect();
        Ok(Snapshot {
            grid: header.grid,
            params: header.params,
            level: header.level,
            state: SweState::from_vec(&header.grid, data),
        })
    }
}

pub fn write_snapshot<W: Write>(mut w: W, snap: &Snapshot) -> Result<()> {
    w.write_all(&snap.to_bytes()?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let f = std::fs::File::open(path)
        .map_err(|e| DdvarError::Io(format!("{}: {e}", path.display())))?;
    Snapshot::from_reader(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let grid = SpaceTimeGrid::uniform(5, 4, 3, 120.0).unwrap();
        let data: Vec<f64> = (0..grid.state_len())
            .map(|k| (k as f64 * 0.1).sin() * 1e3 + f64::EPSILON * k as f64)
            .collect();
        let snap = Snapshot {
            grid,
            params: SweParams::for_grid(&grid),
            level: 2,
            state: SweState::from_vec(&grid, data),
        };
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &snap).unwrap();
        let back = Snapshot::from_reader(bytes.as_slice()).unwrap();
        assert_eq!(back, snap);
        for (a, b) in back.state.data.iter().zip(&snap.state.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let grid = SpaceTimeGrid::uniform(4, 4, 1, 1.0).unwrap();
        let snap = Snapshot {
            grid,
            params: SweParams::for_grid(&grid),
            level: 0,
            state: SweState::zeros(&grid),
        };
        let bytes = snap.to_bytes().unwrap();
        assert!(Snapshot::from_reader(&bytes[..bytes.len() - 3]).is_err());
    }
}
