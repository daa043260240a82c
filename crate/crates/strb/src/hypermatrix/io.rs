//! Binary hypermatrix files.
//!
//! Layout: magic bytes `STRBHM1`, one byte axis count, one label byte per
//! axis (`s`/`t`/`p`), extents as 64-bit little-endian unsigned integers,
//! then the data as 64-bit little-endian IEEE floats in canonical order
//! (first axis fastest-varying).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hypermatrix::{Axis, Hypermatrix};

const MAGIC: &[u8; 7] = b"STRBHM1";

pub fn write_hypermatrix<W: Write>(w: &mut W, h: &Hypermatrix) -> Result<()> {
    let mut label_bytes = Vec::with_capacity(h.rank());
    for label in h.labels() {
        if label.len() != 1 {
            return Err(Error::Format(
                "only unmerged axes are serializable".into(),
            ));
        }
        label_bytes.push(label[0].byte());
    }
    w.write_all(MAGIC)?;
    w.write_all(&[h.rank() as u8])?;
    w.write_all(&label_bytes)?;
    for &d in h.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in h.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_hypermatrix<R: Read>(r: &mut R) -> Result<Hypermatrix> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut rank = [0u8; 1];
    r.read_exact(&mut rank)?;
    let rank = rank[0] as usize;
    if !(2..=3).contains(&rank) {
        return Err(Error::Format(format!("unsupported axis count {rank}")));
    }
    let mut label_bytes = vec![0u8; rank];
    r.read_exact(&mut label_bytes)?;
    let labels: Vec<Axis> = label_bytes
        .iter()
        .map(|&b| Axis::from_byte(b))
        .collect::<Result<_>>()?;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        dims.push(u64::from_le_bytes(buf) as usize);
    }
    let len: usize = dims.iter().product();
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Hypermatrix::new(data, dims, labels)
}

pub fn save<P: AsRef<Path>>(path: P, h: &Hypermatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_hypermatrix(&mut f, h)
}

pub fn load<P: AsRef<Path>>(path: P) -> Result<Hypermatrix> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_hypermatrix(&mut f)
}
