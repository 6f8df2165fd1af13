//! TNS3 binary tensors and CSV frontal slices.
//!
//! TNS3 layout: the 4-byte magic `TNS3`, three little-endian `u32` dims
//! `n1, n2, n3`, then `n1·n2·n3` little-endian `f64` values, row-major with
//! `k` fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::Tensor3;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNS3";

pub fn write_tns3<W: Write>(t: &Tensor3, mut w: W) -> Result<()> {
    let (n1, n2, n3) = t.dims();
    w.write_all(MAGIC)?;
    for n in [n1, n2, n3] {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("dim {n} exceeds u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    for v in t.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tns3<R: Read>(mut r: R) -> Result<Tensor3> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("dims overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            len * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor3::from_vec(dims[0], dims[1], dims[2], data)
}

pub fn save_tns3(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    write_tns3(t, BufWriter::new(File::create(path)?))
}

pub fn load_tns3(path: impl AsRef<Path>) -> Result<Tensor3> {
    read_tns3(BufReader::new(File::open(path)?))
}

/// Writes a matrix as plain comma-separated decimals, one row per line.
pub fn write_slice_csv<W: Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        wr.write_record(m.row(i).iter().map(|v| format!("{v}")))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_slice_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Format("empty or ragged CSV slice".into()));
    }
    let m = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("read_slice_csv"));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tns3_bytes_are_exact() {
        let t = Tensor3::from_vec(1, 2, 1, vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_tns3(&t, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"TNS3");
        assert_eq!(&buf[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&buf[24..32], &(-2.5f64).to_le_bytes());
        assert_eq!(buf.len(), 32);
        assert_eq!(read_tns3(&buf[..]).unwrap(), t);
    }

    #[test]
    fn tns3_rejects_garbage() {
        assert!(read_tns3(&b"TNS2\x01\0\0\0\x01\0\0\0\x01\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        write_tns3(&Tensor3::zeros(2, 2, 2), &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_tns3(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_slice() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.5, -3.0, 0.0, 1e-3, 7.0]);
        let mut buf = Vec::new();
        write_slice_csv(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "1,2.5,-3\n0,0.001,7\n");
        assert_eq!(read_slice_csv(&buf[..]).unwrap(), m);
        assert!(read_slice_csv(&b"1,2\n3\n"[..]).is_err());
    }
}
