//! Weight container: `"UDFW"`, a little-endian `u32` version, then one record
//! per parameter until end of file. A record is a `u32` name length, the
//! UTF-8 name, a `u32` rank, `rank` `u64` dimensions and the `f64` payload.

use std::io::{Read, Write};
use std::path::Path;

use super::{AutodiffError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UDFW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(store: &ParamStore, mut w: impl Write) -> Result<(), AutodiffError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], AutodiffError> {
    let end = pos.checked_add(n).filter(|&e| e <= buf.len()).ok_or_else(|| AutodiffError::Checkpoint("truncated record".into()))?;
    let s = &buf[*pos..end];
    *pos = end;
    Ok(s)
}

fn u32_at(buf: &[u8], pos: &mut usize) -> Result<u32, AutodiffError> {
    Ok(u32::from_le_bytes(take(buf, pos, 4)?.try_into().unwrap()))
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Vec<(String, Tensor)>, AutodiffError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    if take(&buf, &mut pos, 4)? != CHECKPOINT_MAGIC {
        return Err(AutodiffError::Checkpoint("bad magic".into()));
    }
    let version = u32_at(&buf, &mut pos)?;
    if version != CHECKPOINT_VERSION {
        return Err(AutodiffError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while pos < buf.len() {
        let len = u32_at(&buf, &mut pos)? as usize;
        let name = std::str::from_utf8(take(&buf, &mut pos, len)?)
            .map_err(|_| AutodiffError::Checkpoint("name is not utf-8".into()))?
            .to_string();
        let rank = u32_at(&buf, &mut pos)? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&buf, &mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| AutodiffError::Checkpoint("dimension overflow".into()))?;
        let bytes = take(&buf, &mut pos, count.checked_mul(8).ok_or_else(|| AutodiffError::Checkpoint("dimension overflow".into()))?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), AutodiffError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(store, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Loads weights into a store whose architecture already matches.
pub fn load_checkpoint(store: &mut ParamStore, path: &Path) -> Result<(), AutodiffError> {
    let entries = read_checkpoint(std::fs::File::open(path)?)?;
    store.load_values(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("layer.w", Tensor::matrix(2, 3, vec![1.0, -2.5, 3.25, 0.0, 1e-300, -7.0]).unwrap()).unwrap();
        s.add("layer.b", Tensor::matrix(1, 3, vec![0.5, 0.25, -0.125]).unwrap()).unwrap();
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample_store();
        let mut bytes = Vec::new();
        write_checkpoint(&s, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"UDFW");
        let mut t = sample_store();
        for id in t.ids() {
            t.value_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        t.load_values(read_checkpoint(&bytes[..]).unwrap()).unwrap();
        for (a, b) in s.iter().zip(t.iter()) {
            assert_eq!(a, b);
        }
        let mut again = Vec::new();
        write_checkpoint(&t, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let s = sample_store();
        let mut bytes = Vec::new();
        write_checkpoint(&s, &mut bytes).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..]).is_err());
    }

    #[test]
    fn shape_disagreement_is_rejected() {
        let s = sample_store();
        let mut bytes = Vec::new();
        write_checkpoint(&s, &mut bytes).unwrap();
        let mut other = ParamStore::new();
        other.add("layer.w", Tensor::zeros(3, 2)).unwrap();
        other.add("layer.b", Tensor::zeros(1, 3)).unwrap();
        assert!(matches!(other.load_values(read_checkpoint(&bytes[..]).unwrap()), Err(AutodiffError::ShapeMismatch(_))));
    }
}
