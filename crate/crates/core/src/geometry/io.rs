//! ASCII OFF meshes and XYZ point files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, PointCloud, TriangleMesh};
use crate::error::{Error, Result};

/// Formats like C's `%.9g`.
pub fn format_g9(v: f64) -> String {
    const P: i32 = 9;
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= P {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Significant lines (non-empty, comments stripped) with 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

/// Parses an ASCII OFF mesh. Polygons with more than three vertices are
/// fan-triangulated.
pub fn parse_off(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let (ln, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    // some writers put the counts on the header line
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(path, ln, "missing OFF header"))?
        .trim();
    let counts_line = if rest.is_empty() {
        lines.next().ok_or_else(|| parse_err(path, ln, "missing counts line"))?
    } else {
        (ln, rest)
    };
    let counts: Vec<usize> = counts_line
        .1
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(path, counts_line.0, format!("bad count {t:?}"))))
        .collect::<Result<_>>()?;
    let (nv, nf) = match counts.as_slice() {
        [nv, nf, ..] => (*nv, *nf),
        _ => return Err(parse_err(path, counts_line.0, "expected vertex and face counts")),
    };
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, 0, "truncated vertex list"))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse().map_err(|_| parse_err(path, ln, format!("bad coordinate {t:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(parse_err(path, ln, "vertex needs three coordinates"));
        }
        vertices.push([v[0], v[1], v[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(path, 0, "truncated face list"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(path, ln, format!("bad index {t:?}"))))
            .collect::<Result<_>>()?;
        let Some((&count, rest)) = idx.split_first() else {
            return Err(parse_err(path, ln, "empty face"));
        };
        if count < 3 || rest.len() < count {
            return Err(parse_err(path, ln, format!("face declares {count} vertices")));
        }
        for j in 1..count - 1 {
            faces.push([rest[0], rest[j], rest[j + 1]]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn read_off(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_off(&text, path)
}

/// XYZ text: one `x y z` line per point, or `x y z nx ny nz` when the
/// cloud has normals. Values use `%.9g` formatting and LF endings.
pub fn format_xyz(pc: &PointCloud) -> String {
    let mut out = String::with_capacity(pc.len() * 40);
    for (i, p) in pc.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", format_g9(p[0]), format_g9(p[1]), format_g9(p[2]));
        if let Some(n) = pc.normals() {
            let n = n[i];
            let _ = write!(out, " {} {} {}", format_g9(n[0]), format_g9(n[1]), format_g9(n[2]));
        }
        out.push('\n');
    }
    out
}

pub fn write_xyz(path: impl AsRef<Path>, pc: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_xyz(pc)).map_err(|e| Error::io(path, e))
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals: Vec<Point3> = Vec::new();
    let mut width = None;
    for (ln, l) in content_lines(text) {
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(path, ln, format!("bad number {t:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(parse_err(path, ln, format!("expected 3 or 6 values, got {}", vals.len())));
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(parse_err(path, ln, "inconsistent column count"));
        }
        points.push([vals[0], vals[1], vals[2]]);
        if vals.len() == 6 {
            normals.push([vals[3], vals[4], vals[5]]);
        }
    }
    let pc = PointCloud::new(points).map_err(|e| parse_err(path, 0, e.to_string()))?;
    if normals.is_empty() {
        return Ok(pc);
    }
    // printed normals lose precision; renormalize
    let normals = normals
        .into_iter()
        .map(|n| {
            let len = super::norm(&n);
            if len > 0.0 {
                n.map(|c| c / len)
            } else {
                n
            }
        })
        .collect();
    pc.with_normals(normals).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_c_formatting() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-0.5, "-0.5"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (2.5e-7, "2.5e-07"),
            (-1.5e20, "-1.5e+20"),
            (0.999999999999, "1"),
        ];
        for (v, s) in cases {
            assert_eq!(format_g9(v), s, "{v}");
        }
    }

    #[test]
    fn off_parsing() {
        let text = "OFF\n# comment\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";
        let mesh = parse_off(text, Path::new("t.off")).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
        let quad = "OFF 4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert_eq!(parse_off(quad, Path::new("q.off")).unwrap().faces().len(), 2);
        assert!(parse_off("PLY\n", Path::new("x")).is_err());
        assert!(parse_off("OFF\n1 1 0\n0 0 0\n3 0 1 2\n", Path::new("x")).is_err());
    }

    #[test]
    fn xyz_with_and_without_normals() {
        let pc = PointCloud::new(vec![[0.1, -2.0, 3.5], [1e-7, 0.0, 1.0]]).unwrap();
        let text = format_xyz(&pc);
        assert_eq!(text, "0.1 -2 3.5\n1e-07 0 1\n");
        assert_eq!(parse_xyz(&text, Path::new("a")).unwrap(), pc);
        let with_n = pc.with_normals(vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let back = parse_xyz(&format_xyz(&with_n), Path::new("b")).unwrap();
        assert_eq!(back, with_n);
        assert!(parse_xyz("1 2\n", Path::new("c")).is_err());
    }
}
