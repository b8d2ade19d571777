//! Field files.
//!
//! ```text
//! field <n_channels> <n_xi> <n_eta> <name_1> ... <name_c>
//! <channel 1: n_eta rows of n_xi values>
//! ...
//! ```
//!
//! Rows run over η, values within a row over ξ. Lines starting with `#` are
//! ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridField;

pub fn to_text(f: &GridField) -> String {
    let mut s = format!("field {} {} {}", f.n_channels(), f.n_xi, f.n_eta);
    for n in &f.names {
        s.push(' ');
        s.push_str(n);
    }
    s.push('\n');
    for c in 0..f.n_channels() {
        for row in f.channel(c).chunks(f.n_xi) {
            let mut first = true;
            for v in row {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn from_text(text: &str, path: &str) -> Result<GridField> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_string(), line, msg };
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty field file".into()))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.first() != Some(&"field") || tok.len() < 4 {
        return Err(err(hl, "expected `field <n_channels> <n_xi> <n_eta> <names>`".into()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err(hl, format!("bad count `{s}`")));
    let (nc, nx, ny) = (num(tok[1])?, num(tok[2])?, num(tok[3])?);
    if tok.len() != 4 + nc {
        return Err(err(hl, format!("{} channel names for {nc} channels", tok.len() - 4)));
    }
    let mut values = Vec::with_capacity(nc * nx * ny);
    let mut last = hl;
    for (ln, l) in lines {
        last = ln;
        let row: Vec<&str> = l.split_whitespace().collect();
        if row.len() != nx {
            return Err(err(ln, format!("{} values in row, expected {nx}", row.len())));
        }
        for v in row {
            values.push(v.parse::<f64>().map_err(|_| err(ln, format!("bad number `{v}`")))?);
        }
    }
    if values.len() != nc * nx * ny {
        return Err(err(last, format!("{} values, expected {}", values.len(), nc * nx * ny)));
    }
    let channels = tok[4..]
        .iter()
        .zip(values.chunks(nx * ny))
        .map(|(n, v)| (n.to_string(), v.to_vec()))
        .collect();
    GridField::from_channels(nx, ny, channels)
}

pub fn write(f: &GridField, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(f))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<GridField> {
    from_text(&std::fs::read_to_string(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let a: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin() / 3.0).collect();
        let b: Vec<f64> = (0..12).map(|k| 1e-300 * k as f64 - 7.25e12).collect();
        let f = GridField::from_channels(4, 3, vec![("u".into(), a), ("p".into(), b)]).unwrap();
        let text = to_text(&f);
        assert!(text.starts_with("field 2 4 3 u p\n"));
        assert_eq!(from_text(&text, "x").unwrap(), f);
    }

    #[test]
    fn errors_name_the_line() {
        let e = from_text("field 1 2 2 T\n1 2\n3\n", "f.txt").unwrap_err();
        assert!(e.to_string().starts_with("f.txt:3:"), "{e}");
        assert!(from_text("field 2 2 2 T\n", "f").is_err());
        assert!(from_text("mesh 1 2 2 T\n", "f").is_err());
        assert!(from_text("field 1 2 2 T\n1 2\n", "f").is_err());
    }
}
