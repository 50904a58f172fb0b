//! Binary vector file.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u64` vocabulary
//! size, `u64` dimension, then per token a `u32` byte length, the UTF-8
//! bytes and a `u64` count, then the row-major `f32` matrix.

use std::fs;
use std::path::Path;

use super::{Result, W2vError, WordVectors};
use crate::corpus::Vocabulary;

pub const MAGIC: &[u8; 8] = b"ENTCLW2V";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_vectors(wv: &WordVectors, path: &Path) -> Result<()> {
    let vocab = wv.vocab();
    let mut buf = Vec::with_capacity(32 + wv.matrix().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(vocab.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(wv.dim as u64).to_le_bytes());
    for (tok, &count) in vocab.tokens().iter().zip(vocab.counts()) {
        buf.extend_from_slice(&(tok.len() as u32).to_le_bytes());
        buf.extend_from_slice(tok.as_bytes());
        buf.extend_from_slice(&count.to_le_bytes());
    }
    for x in wv.matrix() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(|source| W2vError::Io {
        path: path.to_owned(),
        source,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(W2vError::Truncated { offset: self.pos }),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_vectors(path: &Path) -> Result<WordVectors> {
    let raw = fs::read(path).map_err(|source| W2vError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut r = Reader { buf: &raw, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| W2vError::BadMagic)? != MAGIC {
        return Err(W2vError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(W2vError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_at = r.pos;
    let n = r.u64()? as usize;
    let dim = r.u64()? as usize;
    // every token costs at least 12 bytes and every weight 4
    let min_body = n
        .checked_mul(12)
        .zip(n.checked_mul(dim).and_then(|c| c.checked_mul(4)));
    match min_body {
        Some((a, b)) if a.checked_add(b).is_some_and(|t| t <= raw.len() - r.pos) => {}
        _ => {
            return Err(W2vError::Corrupt {
                offset: header_at,
                message: format!("header claims {n} tokens x {dim} dims, larger than file"),
            })
        }
    }
    if n > 0 && dim == 0 {
        return Err(W2vError::Corrupt {
            offset: header_at + 8,
            message: "zero dimension".into(),
        });
    }
    let mut tokens = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32()? as usize;
        let at = r.pos;
        let bytes = r.take(len)?;
        let tok = std::str::from_utf8(bytes).map_err(|e| W2vError::Corrupt {
            offset: at,
            message: e.to_string(),
        })?;
        tokens.push(tok.to_owned());
        counts.push(r.u64()?);
    }
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        data.push(f32::from_le_bytes(r.take(4)?.try_into().unwrap()));
    }
    if r.pos != raw.len() {
        return Err(W2vError::Corrupt {
            offset: r.pos,
            message: "trailing bytes".into(),
        });
    }
    Ok(WordVectors::new(
        Vocabulary::from_parts(tokens, counts),
        dim,
        data,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WordVectors {
        let vocab =
            Vocabulary::from_parts(vec!["psg".into(), "kylian_mbappé".into()], vec![12, 10]);
        WordVectors::new(
            vocab,
            3,
            vec![0.1, -0.2, 3.5e-8, f32::MIN_POSITIVE, 1.0, -0.0],
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let wv = sample();
        save_vectors(&wv, &p).unwrap();
        let back = load_vectors(&p).unwrap();
        assert_eq!(back.vocab(), wv.vocab());
        let bits = |w: &WordVectors| w.matrix().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&wv));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_vectors(Path::new("/nonexistent/v.bin")),
            Err(W2vError::Io { .. })
        ));
    }

    #[test]
    fn corrupted_header_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        save_vectors(&sample(), &p).unwrap();
        let mut raw = fs::read(&p).unwrap();
        raw[12..20].copy_from_slice(&u64::MAX.to_le_bytes());
        fs::write(&p, &raw).unwrap();
        match load_vectors(&p).unwrap_err() {
            W2vError::Corrupt { offset, .. } => assert_eq!(offset, 12),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        save_vectors(&sample(), &p).unwrap();
        let mut raw = fs::read(&p).unwrap();
        raw[8] = 9;
        fs::write(&p, &raw).unwrap();
        assert!(matches!(
            load_vectors(&p),
            Err(W2vError::Version { found: 9, .. })
        ));
        raw[0] = b'X';
        fs::write(&p, &raw).unwrap();
        assert!(matches!(load_vectors(&p), Err(W2vError::BadMagic)));
    }

    #[test]
    fn truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        save_vectors(&sample(), &p).unwrap();
        let raw = fs::read(&p).unwrap();
        fs::write(&p, &raw[..raw.len() - 2]).unwrap();
        assert!(matches!(
            load_vectors(&p),
            Err(W2vError::Corrupt { .. }) | Err(W2vError::Truncated { .. })
        ));
    }
}
