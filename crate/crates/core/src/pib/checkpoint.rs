//! Flat binary checkpoint: `u64` LE length `D`, `D` LE `f64` values, `u64`
//! LE iteration index.

use std::io::{Read, Write};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<f64>,
    pub iter: u64,
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &[f64], iter: u64) -> Result<()> {
    out.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        out.write_all(&p.to_le_bytes())?;
    }
    out.write_all(&iter.to_le_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut word = [0u8; 8];
    let mut next = |input: &mut R, what: &str| -> Result<[u8; 8]> {
        input
            .read_exact(&mut word)
            .map_err(|e| Error::parse("checkpoint", format!("truncated {what}: {e}")))?;
        Ok(word)
    };
    let d = u64::from_le_bytes(next(&mut input, "length")?);
    let d = usize::try_from(d).map_err(|_| Error::parse("checkpoint", "length overflows usize"))?;
    let mut params = Vec::with_capacity(d.min(1 << 24));
    for _ in 0..d {
        params.push(f64::from_le_bytes(next(&mut input, "parameters")?));
    }
    let iter = u64::from_le_bytes(next(&mut input, "iteration index")?);
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::parse(
            "checkpoint",
            "trailing bytes after iteration index",
        ));
    }
    Ok(Checkpoint { params, iter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &[1.5, -2.0], 7).unwrap();
        let mut expected = 2u64.to_le_bytes().to_vec();
        expected.extend(1.5f64.to_le_bytes());
        expected.extend((-2.0f64).to_le_bytes());
        expected.extend(7u64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncation_and_trailing_bytes_fail() {
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &[1.0, 2.0, 3.0], 1).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(params in proptest::collection::vec(proptest::num::f64::ANY, 0..64), iter: u64) {
            let mut bytes = Vec::new();
            write_checkpoint(&mut bytes, &params, iter).unwrap();
            prop_assert_eq!(bytes.len(), 16 + 8 * params.len());
            let back = read_checkpoint(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.iter, iter);
            prop_assert!(back.params.iter().zip(&params).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
