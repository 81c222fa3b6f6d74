use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

pub const MAGIC: &[u8; 4] = b"NLSF";
pub const FORMAT_VERSION: u32 = 1;

/// `NLSF`, version, `N`, `m` as u32 LE, then `n` (u32) and `L` (f64) per axis,
/// then the values as f64 LE, axis 0 slowest.
pub fn encode_field(u: &Field) -> Vec<u8> {
    let spec = u.spec();
    let nd = spec.total_dims();
    let mut out = Vec::with_capacity(16 + 12 * nd + 8 * u.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(nd as u32).to_le_bytes());
    out.extend_from_slice(&(spec.confined_dims() as u32).to_le_bytes());
    for a in 0..nd {
        out.extend_from_slice(&(spec.points(a) as u32).to_le_bytes());
        out.extend_from_slice(&spec.half_width(a).to_le_bytes());
    }
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "header truncated while reading {what}: need {end} bytes, file has {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes, expected NLSF".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let nd = r.u32("N")? as usize;
    let m = r.u32("m")? as usize;
    if nd == 0 || nd > 16 {
        return Err(Error::Format(format!("implausible dimension N = {nd}")));
    }
    let mut points = Vec::with_capacity(nd);
    let mut widths = Vec::with_capacity(nd);
    for a in 0..nd {
        points.push(r.u32(&format!("n of axis {a}"))? as usize);
        widths.push(r.f64(&format!("L of axis {a}"))?);
    }
    let spec = if m == 0 {
        GridSpec::bare(&widths, &points)?
    } else if m == nd {
        GridSpec::fully_confined(&widths, &points)?
    } else {
        GridSpec::new(nd, m, &widths, &points)?
    };
    let expected = r.pos + 8 * spec.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "length mismatch: header implies {expected} bytes, file has {} bytes",
            bytes.len()
        )));
    }
    let values = bytes[r.pos..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::from_values(&Arc::new(spec), values)
}

pub fn write_field(path: impl AsRef<Path>, u: &Field) -> Result<()> {
    fs::write(path, encode_field(u))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    decode_field(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_payload_sizes() {
        let spec = Arc::new(GridSpec::new(2, 1, &[8.0, 12.0], &[127, 191]).unwrap());
        let bytes = encode_field(&Field::zeros(&spec));
        let header = 4 + 4 + 4 + 4 + 2 * (4 + 8);
        assert_eq!(bytes.len() - header, 127 * 191 * 8);
        assert_eq!(&bytes[..4], b"NLSF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn truncated_and_corrupt() {
        let spec = Arc::new(GridSpec::new(2, 1, &[2.0], &[5]).unwrap());
        let bytes = encode_field(&Field::constant(&spec, 1.5));
        let err = decode_field(&bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(err.contains(&format!("{} bytes", bytes.len())), "{err}");
        assert!(err.contains(&format!("{} bytes", bytes.len() - 3)), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_field(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes;
        bad[4] = 2;
        assert!(decode_field(&bad).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = Arc::new(GridSpec::fully_confined(&[3.0, 4.0], &[5, 7]).unwrap());
        let u = Field::from_fn(&spec, |z| z[0] - 0.1 * z[1]);
        let path = dir.path().join("u.nlsf");
        write_field(&path, &u).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back, u);
        assert_eq!(back.spec().confined_dims(), 2);
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(values in prop::collection::vec(-1e300f64..1e300, 3 * 4 * 5)) {
            let spec = Arc::new(GridSpec::new(3, 1, &[1.0, 2.5, 0.75], &[3, 4, 5]).unwrap());
            let u = Field::from_values(&spec, values).unwrap();
            let back = decode_field(&encode_field(&u)).unwrap();
            prop_assert_eq!(back.spec(), u.spec());
            for (a, b) in back.values().iter().zip(u.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
