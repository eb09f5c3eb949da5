//! Parameter files: a short text header naming each tensor and its shape,
//! followed by the flat values as little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::ParamBlock;
use crate::error::{Error, Result};

const MAGIC: &str = "tramlab-params 1";

pub fn write_params<W: Write>(mut w: W, block: &ParamBlock) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "tensors {}", block.tensors().len())?;
    for t in block.tensors() {
        if t.name.contains(char::is_whitespace) {
            return Err(Error::Parse(format!("tensor name `{}` contains whitespace", t.name)));
        }
        writeln!(w, "{} {} {}", t.name, t.rows, t.cols)?;
    }
    writeln!(w, "data {}", block.len())?;
    for v in block.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Err(Error::Parse("unexpected end of parameter header".into()));
    }
    Ok(line.trim_end().to_string())
}

fn tagged_count(line: &str, tag: &str) -> Result<usize> {
    line.strip_prefix(tag)
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("expected `{tag} <count>`, got `{line}`")))
}

pub fn read_params<R: Read>(r: R) -> Result<ParamBlock> {
    let mut r = BufReader::new(r);
    if header_line(&mut r)? != MAGIC {
        return Err(Error::Parse("not a parameter file".into()));
    }
    let count = tagged_count(&header_line(&mut r)?, "tensors")?;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let line = header_line(&mut r)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [name, rows, cols] = parts.as_slice() else {
            return Err(Error::Parse(format!("bad tensor line `{line}`")));
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad dimension in `{line}`")));
        shapes.push((name.to_string(), parse(rows)?, parse(cols)?));
    }
    let total = tagged_count(&header_line(&mut r)?, "data")?;
    let mut bytes = vec![0u8; total * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    ParamBlock::from_parts(&shapes, data)
}

pub fn save_params(path: &Path, block: &ParamBlock) -> Result<()> {
    write_params(BufWriter::new(File::create(path)?), block)
}

pub fn load_params(path: &Path) -> Result<ParamBlock> {
    read_params(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{mlp_init, MlpSpec};

    #[test]
    fn round_trip_is_lossless() {
        let block = mlp_init(&MlpSpec::affine(3, 2, 4)).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &block).unwrap();
        let back = read_params(buf.as_slice()).unwrap();
        assert_eq!(back, block);
        assert!(back.as_slice().iter().zip(block.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("teacher.params");
        let block = mlp_init(&MlpSpec::affine(5, 1, 9)).unwrap();
        save_params(&path, &block).unwrap();
        assert_eq!(load_params(&path).unwrap(), block);
    }

    #[test]
    fn truncated_data_is_an_error() {
        let block = mlp_init(&MlpSpec::affine(3, 2, 4)).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &block).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_params(buf.as_slice()).is_err());
        assert!(read_params(&b"garbage\n"[..]).is_err());
    }
}
