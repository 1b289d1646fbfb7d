//! Readers and writers for every file the CLI touches. The layouts are
//! documented byte for byte in `docs/formats.md`.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! every text file reads back to bit-identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use interprop::{ConstraintKind, ConstraintMatrix, CsrMatrix, Label, Sign};
use ndarray::Array2;
use sha2::{Digest, Sha256};

pub const BINARY_MAGIC: &[u8; 4] = b"IPMX";
pub const BINARY_VERSION: u32 = 1;
const BINARY_HEADER: usize = 4 + 4 + 8 + 8;

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push((n + 1, t.to_string()));
        }
    }
    Ok(out)
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace()).filter(|s| !s.is_empty())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| anyhow!("{}:{line}: cannot parse '{s}'", path.display()))
}

/// Reads a dense matrix, detecting the binary format by its magic bytes.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut head = [0u8; 4];
    let is_binary = File::open(path).with_context(|| format!("opening {}", path.display()))?.read(&mut head)? == 4
        && &head == BINARY_MAGIC;
    if is_binary {
        read_binary_matrix(path)
    } else {
        read_text_matrix(path)
    }
}

pub fn read_text_matrix(path: &Path) -> Result<Array2<f64>> {
    let lines = data_lines(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    for (n, line) in &lines {
        let row: Vec<f64> = fields(line).map(|s| parse_field(path, *n, s)).collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                bail!("{}:{n}: row has {} values, expected {c}", path.display(), row.len())
            }
            _ => {}
        }
        values.extend(row);
    }
    let cols = cols.unwrap_or(0);
    Ok(Array2::from_shape_vec((lines.len(), cols), values)?)
}

pub fn write_text_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", line.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(bytes.len() >= BINARY_HEADER, "{}: truncated header", path.display());
    ensure!(&bytes[..4] == BINARY_MAGIC, "{}: bad magic bytes", path.display());
    let version = u32::from_le_bytes(bytes[4..8].try_into()?);
    ensure!(version == BINARY_VERSION, "{}: unsupported version {version}", path.display());
    let rows = u64::from_le_bytes(bytes[8..16].try_into()?) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into()?) as usize;
    let count = rows.checked_mul(cols).ok_or_else(|| anyhow!("{}: dimensions overflow", path.display()))?;
    let body = &bytes[BINARY_HEADER..];
    ensure!(
        Some(body.len()) == count.checked_mul(8),
        "{}: expected {count} values, found {} bytes",
        path.display(),
        body.len()
    );
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Array2::from_shape_vec((rows, cols), values)?)
}

pub fn write_binary_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Sparse matrix as `rows cols` followed by one `i j value` line per entry.
pub fn read_sparse(path: &Path) -> Result<CsrMatrix> {
    let lines = data_lines(path)?;
    let ((n, header), body) = lines.split_first().ok_or_else(|| anyhow!("{}: empty file", path.display()))?;
    let dims: Vec<usize> = fields(header).map(|s| parse_field(path, *n, s)).collect::<Result<_>>()?;
    ensure!(dims.len() == 2, "{}:{n}: header must be 'rows cols'", path.display());
    let mut triplets = Vec::with_capacity(body.len());
    for (n, line) in body {
        let f: Vec<&str> = fields(line).collect();
        ensure!(f.len() == 3, "{}:{n}: expected 'i j value'", path.display());
        triplets.push((parse_field(path, *n, f[0])?, parse_field(path, *n, f[1])?, parse_field(path, *n, f[2])?));
    }
    CsrMatrix::from_triplets(dims[0], dims[1], &triplets).with_context(|| format!("in {}", path.display()))
}

pub fn write_sparse(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# sparse matrix: rows cols, then i j value")?;
    writeln!(w, "{} {}", m.rows(), m.cols())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{i} {j} {v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `i j s` constraint triples. Intra-view files may list each
/// unordered pair once; the mirrored entry is added when absent.
pub fn read_constraints(path: &Path, rows: usize, cols: usize, kind: ConstraintKind) -> Result<ConstraintMatrix> {
    let mut entries: Vec<(usize, usize, Sign)> = Vec::new();
    for (n, line) in data_lines(path)? {
        let f: Vec<&str> = fields(&line).collect();
        ensure!(f.len() == 3, "{}:{n}: expected 'i j s'", path.display());
        let i: usize = parse_field(path, n, f[0])?;
        let j: usize = parse_field(path, n, f[1])?;
        let s: i64 = parse_field(path, n, f[2].trim_start_matches('+'))?;
        let sign = Sign::from_i64(s).ok_or_else(|| anyhow!("{}:{n}: sign must be +1 or -1", path.display()))?;
        ensure!(i < rows && j < cols, "{}:{n}: index ({i}, {j}) outside {rows}x{cols}", path.display());
        entries.push((i, j, sign));
    }
    if kind == ConstraintKind::Intra {
        let listed: std::collections::HashMap<(usize, usize), Sign> =
            entries.iter().map(|&(i, j, s)| ((i, j), s)).collect();
        for (&(i, j), &s) in &listed {
            match listed.get(&(j, i)) {
                None => entries.push((j, i, s)),
                Some(&t) if t != s => bail!("{}: pair ({i}, {j}) has conflicting signs", path.display()),
                _ => {}
            }
        }
    }
    entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
    entries.dedup_by(|a, b| (a.0, a.1, a.2) == (b.0, b.1, b.2));
    ConstraintMatrix::new(rows, cols, kind, entries).with_context(|| format!("in {}", path.display()))
}

pub fn write_constraints(path: &Path, z: &ConstraintMatrix) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# {}x{} {:?} constraints: i j s", z.rows(), z.cols(), z.kind())?;
    for &(i, j, s) in z.entries() {
        writeln!(w, "{i} {j} {}", if s == Sign::MustLink { "+1" } else { "-1" })?;
    }
    w.flush()?;
    Ok(())
}

/// One integer class label per line.
pub fn read_labels(path: &Path) -> Result<Vec<Label>> {
    data_lines(path)?.into_iter().map(|(n, l)| parse_field(path, n, &l)).collect()
}

pub fn write_labels(path: &Path, labels: &[Label]) -> Result<()> {
    write_lines(path, labels.iter())
}

/// One 0-based item index per line; must be unique and below `items`.
pub fn read_indices(path: &Path, items: usize) -> Result<Vec<usize>> {
    let idx: Vec<usize> =
        data_lines(path)?.into_iter().map(|(n, l)| parse_field(path, n, &l)).collect::<Result<_>>()?;
    let mut seen = vec![false; items];
    for &i in &idx {
        ensure!(i < items, "{}: index {i} out of range for {items} items", path.display());
        ensure!(!seen[i], "{}: index {i} listed twice", path.display());
        seen[i] = true;
    }
    Ok(idx)
}

pub fn write_indices(path: &Path, idx: &[usize]) -> Result<()> {
    write_lines(path, idx.iter())
}

fn write_lines<T: std::fmt::Display>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for v in items {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn text_matrix_round_trip_is_exact() {
        let d = tmp();
        let p = d.path().join("m.tsv");
        let m = array![[0.1, -1e-300, 1.0 / 3.0], [f64::MAX, 0.0, -2.5e17]];
        write_text_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }

    #[test]
    fn text_matrix_accepts_comments_and_delimiters() {
        let d = tmp();
        let p = d.path().join("m.csv");
        std::fs::write(&p, "# header\n1,2, 3\n\n4\t5 6\n").unwrap();
        assert_eq!(read_matrix(&p).unwrap(), array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        std::fs::write(&p, "1 2\n3\n").unwrap();
        assert!(read_matrix(&p).is_err());
    }

    #[test]
    fn binary_layout() {
        let d = tmp();
        let p = d.path().join("f.ipmx");
        let m = array![[1.5, -0.0], [2.0, 3.0], [4.0, 5.0]];
        write_binary_matrix(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"IPMX");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..16], 3u64.to_le_bytes());
        assert_eq!(bytes[16..24], 2u64.to_le_bytes());
        assert_eq!(bytes[24..32], 1.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 6 * 8);
        let back = read_matrix(&p).unwrap();
        assert_eq!(back, m);
        assert!(back[[0, 1]].is_sign_negative());
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_binary_matrix(&p).is_err());
    }

    #[test]
    fn sparse_round_trip() {
        let d = tmp();
        let p = d.path().join("w.txt");
        let m = CsrMatrix::from_triplets(3, 4, &[(0, 1, 0.25), (2, 3, 1.0 / 7.0), (1, 0, -3.0)]).unwrap();
        write_sparse(&p, &m).unwrap();
        assert_eq!(read_sparse(&p).unwrap(), m);
    }

    #[test]
    fn constraints_round_trip_and_mirror() {
        let d = tmp();
        let p = d.path().join("z.txt");
        std::fs::write(&p, "# c\n0 1 +1\n2 0 -1\n").unwrap();
        let z = read_constraints(&p, 3, 2, ConstraintKind::Inter).unwrap();
        assert_eq!(z.get(2, 0), Some(Sign::CannotLink));
        write_constraints(&p, &z).unwrap();
        assert_eq!(read_constraints(&p, 3, 2, ConstraintKind::Inter).unwrap(), z);

        std::fs::write(&p, "0 1 1\n").unwrap();
        let zi = read_constraints(&p, 3, 3, ConstraintKind::Intra).unwrap();
        assert_eq!(zi.get(1, 0), Some(Sign::MustLink));
        std::fs::write(&p, "0 1 1\n1 0 -1\n").unwrap();
        assert!(read_constraints(&p, 3, 3, ConstraintKind::Intra).is_err());
        std::fs::write(&p, "0 5 1\n").unwrap();
        assert!(read_constraints(&p, 3, 3, ConstraintKind::Inter).is_err());
        std::fs::write(&p, "0 1 2\n").unwrap();
        assert!(read_constraints(&p, 3, 3, ConstraintKind::Inter).is_err());
    }

    #[test]
    fn labels_and_indices() {
        let d = tmp();
        let p = d.path().join("l.txt");
        write_labels(&p, &[3, 1, 4]).unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![3, 1, 4]);
        write_indices(&p, &[2, 0]).unwrap();
        assert_eq!(read_indices(&p, 3).unwrap(), vec![2, 0]);
        assert!(read_indices(&p, 2).is_err());
        std::fs::write(&p, "1\n1\n").unwrap();
        assert!(read_indices(&p, 3).is_err());
    }

    #[test]
    fn checksums() {
        assert_eq!(sha256_str(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        let d = tmp();
        let p = d.path().join("a");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), sha256_str("abc"));
    }
}
