use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::Path;

use super::set::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geom::io::{data_lines, num, read, write};

/// Dense whitespace text, one row per line.
pub fn load_soft_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, f) in data_lines(&text) {
        let row = f.iter().map(|s| num(path, ln, s)).collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(path, ln, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::parse(path, 0, "empty score matrix"));
    }
    let m = rows[0].len();
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

/// One "i j" line per pair.
pub fn save_correspondences(corr: &CorrespondenceSet, path: &Path) -> Result<()> {
    let mut s = String::with_capacity(corr.len() * 12);
    for (i, j) in corr.pairs() {
        writeln!(s, "{i} {j}").unwrap();
    }
    write(path, &s)
}

pub fn load_correspondences(path: &Path, n: usize, m: usize) -> Result<CorrespondenceSet> {
    let text = read(path)?;
    let pairs = data_lines(&text)
        .map(|(ln, f)| {
            if f.len() != 2 {
                return Err(Error::parse(path, ln, "expected 'i j'"));
            }
            Ok((num(path, ln, f[0])?, num(path, ln, f[1])?))
        })
        .collect::<Result<Vec<_>>>()?;
    CorrespondenceSet::new(n, m, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = CorrespondenceSet::new(5, 4, vec![(4, 0), (1, 3)]).unwrap();
        let p = dir.path().join("c.txt");
        save_correspondences(&c, &p).unwrap();
        assert_eq!(load_correspondences(&p, 5, 4).unwrap(), c);
        assert!(load_correspondences(&p, 3, 4).is_err());

        let s = dir.path().join("s.txt");
        std::fs::write(&s, "0.5 0.25 1\n0 1e-3 2\n").unwrap();
        let m = load_soft_matrix(&s).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!((m[(0, 1)], m[(1, 1)]), (0.25, 1e-3));
        std::fs::write(&s, "1 2\n3\n").unwrap();
        assert!(matches!(load_soft_matrix(&s), Err(Error::Parse { line: 2, .. })));
    }
}
