//! Scenario dataset files (`AERRM1`).
//!
//! Per scenario, row-major: UAV positions `M x 3`, then gain, azimuth and
//! zenith, each `M x L x N`.

use std::path::Path;

use ndarray::Array3;

use crate::channel::{ChannelTensor, Scenario};
use crate::error::{Error, Result};
use crate::format::{BlockReader, BlockWriter, Header};

pub const DATASET_MAGIC: &[u8; 6] = b"AERRM1";

pub fn write_dataset(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    let (m, l, n) = scenarios
        .first()
        .map(|s| s.channel.dims())
        .unwrap_or((1, 1, 1));
    for s in scenarios {
        s.channel.validate()?;
        if s.channel.dims() != (m, l, n) || s.uav_positions.len() != m {
            return Err(Error::Shape("scenarios in one dataset must share M, L, N".into()));
        }
    }
    let header = Header {
        count: scenarios.len(),
        m,
        l,
        n,
    };
    let mut w = BlockWriter::create(path, DATASET_MAGIC, header)?;
    for s in scenarios {
        w.write_f32s(s.uav_positions.iter().flatten().copied())?;
        w.write_f32s(s.channel.gain.iter().copied())?;
        w.write_f32s(s.channel.azimuth.iter().copied())?;
        w.write_f32s(s.channel.zenith.iter().copied())?;
    }
    w.finish()
}

pub fn read_dataset(path: &Path) -> Result<Vec<Scenario>> {
    let (mut r, h) = BlockReader::open(path, DATASET_MAGIC)?;
    let links = h.m * h.l * h.n;
    let shape = (h.m, h.l, h.n);
    let to_tensor = |v: Vec<f64>| Array3::from_shape_vec(shape, v).expect("block length matches header");
    let mut out = Vec::with_capacity(h.count);
    for _ in 0..h.count {
        let pos = r.read_f32s(h.m * 3)?;
        let uav_positions = pos.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let channel = ChannelTensor {
            gain: to_tensor(r.read_f32s(links)?),
            azimuth: to_tensor(r.read_f32s(links)?),
            zenith: to_tensor(r.read_f32s(links)?),
        };
        channel.validate()?;
        out.push(Scenario {
            uav_positions,
            channel,
        });
    }
    r.expect_eof()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_dataset, SceneConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let data = generate_dataset(&SceneConfig::default(), 3, 11).unwrap();
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(data.len(), back.len());
        for (a, b) in data.iter().zip(&back) {
            for (x, y) in a.channel.gain.iter().zip(b.channel.gain.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&path, &generate_dataset(&SceneConfig::default(), 1, 1).unwrap()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::BadMagic { .. })));
        bytes[0] = b'A';
        bytes[5] = b'9';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Version { .. })));
    }

    #[test]
    fn short_payload_is_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let mut bytes = DATASET_MAGIC.to_vec();
        for v in [1u32, 2, 2, 4] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[0u8; 40]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Truncated(_))));
    }
}
