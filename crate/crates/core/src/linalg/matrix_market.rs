//! MatrixMarket coordinate (sparse matrices) and array (vectors) formats,
//! real entries, 1-based indices on disk.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::BlockSparseMatrix;

/// Scalar sparse matrix in coordinate form, 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            d[(r, c)] += v;
        }
        d
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }
}

impl From<&BlockSparseMatrix> for CooMatrix {
    fn from(m: &BlockSparseMatrix) -> Self {
        CooMatrix {
            nrows: m.nrows(),
            ncols: m.ncols(),
            entries: m.triplets(),
        }
    }
}

pub fn write_matrix<W: Write>(m: &CooMatrix, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows, m.ncols, m.entries.len())?;
    for &(r, c, v) in &m.entries {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_file(m: &CooMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_matrix(m, File::create(path)?)
}

pub fn write_vector<W: Write>(v: &[f64], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector_file(v: &[f64], path: impl AsRef<Path>) -> Result<()> {
    write_vector(v, File::create(path)?)
}

struct Header {
    format: String,
    symmetry: String,
}

fn parse_header(line: &str) -> Result<Header> {
    let fields: Vec<String> = line
        .split_whitespace()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse(format!("bad MatrixMarket banner: {line}")));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(Error::Parse(format!(
            "unsupported field type {}",
            fields[3]
        )));
    }
    Ok(Header {
        format: fields[2].clone(),
        symmetry: fields[4].clone(),
    })
}

fn data_lines<R: Read>(input: R) -> Result<(Header, Vec<String>)> {
    let mut lines = BufReader::new(input).lines();
    let banner = lines
        .next()
        .ok_or_else(|| Error::Parse("empty MatrixMarket file".into()))??;
    let header = parse_header(&banner)?;
    let mut data = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        data.push(t.to_string());
    }
    Ok((header, data))
}

fn numbers<T: std::str::FromStr>(line: &str, n: usize) -> Result<Vec<T>> {
    let v: Vec<T> = line
        .split_whitespace()
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Parse(format!("bad number '{s}'")))
        })
        .collect::<Result<_>>()?;
    if v.len() != n {
        return Err(Error::Parse(format!("expected {n} fields in '{line}'")));
    }
    Ok(v)
}

/// Reads a coordinate matrix; `symmetric` files are expanded to both triangles.
pub fn read_matrix<R: Read>(input: R) -> Result<CooMatrix> {
    let (header, data) = data_lines(input)?;
    if header.format != "coordinate" {
        return Err(Error::Parse("expected coordinate format".into()));
    }
    let symmetric = match header.symmetry.as_str() {
        "general" => false,
        "symmetric" => true,
        s => return Err(Error::Parse(format!("unsupported symmetry {s}"))),
    };
    let size = data
        .first()
        .ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = numbers(size, 3)?;
    let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
    if data.len() - 1 != nnz {
        return Err(Error::Parse(format!(
            "expected {nnz} entries, found {}",
            data.len() - 1
        )));
    }
    let mut entries = Vec::with_capacity(nnz);
    for line in &data[1..] {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("bad entry '{line}'")));
        }
        let parse_idx = |s: &str, n: usize| -> Result<usize> {
            let i: usize = s
                .parse()
                .map_err(|_| Error::Parse(format!("bad index '{s}'")))?;
            if i == 0 || i > n {
                return Err(Error::Parse(format!("index {i} out of range 1..={n}")));
            }
            Ok(i - 1)
        };
        let r = parse_idx(f[0], nrows)?;
        let c = parse_idx(f[1], ncols)?;
        let v: f64 = f[2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad value '{}'", f[2])))?;
        entries.push((r, c, v));
        if symmetric && r != c {
            entries.push((c, r, v));
        }
    }
    Ok(CooMatrix {
        nrows,
        ncols,
        entries,
    })
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<CooMatrix> {
    read_matrix(File::open(path)?)
}

/// Reads a dense column vector in array format.
pub fn read_vector<R: Read>(input: R) -> Result<Vec<f64>> {
    let (header, data) = data_lines(input)?;
    if header.format != "array" {
        return Err(Error::Parse("expected array format".into()));
    }
    let size = data
        .first()
        .ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = numbers(size, 2)?;
    if dims[1] != 1 || data.len() - 1 != dims[0] {
        return Err(Error::Parse("expected a single column".into()));
    }
    data[1..]
        .iter()
        .map(|l| Ok(numbers::<f64>(l, 1)?[0]))
        .collect()
}

pub fn read_vector_file(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_vector(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = CooMatrix {
            nrows: 3,
            ncols: 2,
            entries: vec![(0, 0, 1.5), (2, 1, -1e-20), (1, 0, 3.0)],
        };
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);

        let v = vec![0.1, -2.0, 1e300];
        let mut buf = Vec::new();
        write_vector(&v, &mut buf).unwrap();
        assert_eq!(read_vector(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn symmetric_and_comments() {
        let text =
            "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 1\n";
        let m = read_matrix(text.as_bytes()).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.to_dense()[(0, 1)], 1.0);
    }

    #[test]
    fn malformed_input() {
        assert!(read_matrix("".as_bytes()).is_err());
        assert!(read_matrix(
            "%%MatrixMarket matrix coordinate complex general\n1 1 0\n".as_bytes()
        )
        .is_err());
        assert!(read_matrix(
            "%%MatrixMarket matrix coordinate real general\n1 1 1\n2 1 1.0\n".as_bytes()
        )
        .is_err());
        assert!(read_matrix(
            "%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.0\n".as_bytes()
        )
        .is_err());
    }
}
