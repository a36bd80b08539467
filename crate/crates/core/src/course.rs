//! Waypoint courses: CSV storage and polygon densification.

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CourseError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: expected header x,y, found {found}")]
    BadHeader { path: PathBuf, found: String },
    #[error("{path}: row {row}: {message}")]
    BadRow { path: PathBuf, row: usize, message: String },
    #[error("invalid course: {0}")]
    Invalid(String),
}

/// Reads an `x,y` CSV with one waypoint per row.
pub fn load_trajectory(path: &Path) -> Result<Vec<(f64, f64)>, CourseError> {
    let io = |e: csv::Error| CourseError::Io {
        path: path.to_owned(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(io)?;
    let header = reader.headers().map_err(io)?.clone();
    if header.len() != 2 || &header[0] != "x" || &header[1] != "y" {
        return Err(CourseError::BadHeader {
            path: path.to_owned(),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let bad = |message: String| CourseError::BadRow {
            path: path.to_owned(),
            row,
            message,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parse = |s: &str| -> Result<f64, CourseError> {
            let v: f64 = s.parse().map_err(|_| bad(format!("{s:?} is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("{s:?} is not finite")))
            }
        };
        out.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(out)
}

pub fn write_trajectory(waypoints: &[(f64, f64)], out: impl std::io::Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for (x, y) in waypoints {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(waypoints: &[(f64, f64)], path: &Path) -> Result<(), CourseError> {
    let io = |message: String| CourseError::Io {
        path: path.to_owned(),
        message,
    };
    let file = std::fs::File::create(path).map_err(|e| io(e.to_string()))?;
    write_trajectory(waypoints, file).map_err(|e| io(e.to_string()))
}

/// Splits every polygon edge into equal pieces no longer than `spacing`.
/// A closed polygon ends back on its first vertex.
pub fn densify(vertices: &[(f64, f64)], spacing: f64, closed: bool) -> Result<Vec<(f64, f64)>, CourseError> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(CourseError::Invalid(format!("spacing {spacing} must be positive")));
    }
    let Some(&first) = vertices.first() else {
        return Err(CourseError::Invalid("no vertices".into()));
    };
    let mut ring = vertices.to_vec();
    if closed {
        ring.push(first);
    }
    let mut out = Vec::new();
    for edge in ring.windows(2) {
        let ((x0, y0), (x1, y1)) = (edge[0], edge[1]);
        let len = (x1 - x0).hypot(y1 - y0);
        let n = (len / spacing - 1e-9).ceil().max(1.0) as usize;
        for k in 0..n {
            let t = k as f64 / n as f64;
            out.push((x0 + t * (x1 - x0), y0 + t * (y1 - y0)));
        }
    }
    out.push(*ring.last().expect("non-empty"));
    Ok(out)
}

/// Square course starting at the origin, first leg along +x, turning left.
pub fn rect_course(side: f64, spacing: f64) -> Result<Vec<(f64, f64)>, CourseError> {
    densify(&[(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)], spacing, true)
}

/// Counter-clockwise circle through the origin, tangent to +x there.
pub fn circle_course(radius: f64, spacing: f64) -> Result<Vec<(f64, f64)>, CourseError> {
    if !(radius.is_finite() && radius > 0.0 && spacing.is_finite() && spacing > 0.0) {
        return Err(CourseError::Invalid("radius and spacing must be positive".into()));
    }
    let n = ((std::f64::consts::TAU * radius / spacing).ceil() as usize).max(3);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let a = -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * k as f64 / n as f64;
            (radius * a.cos(), radius + radius * a.sin())
        })
        .collect();
    out[0] = (0.0, 0.0);
    out.push((0.0, 0.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_course_has_unit_spacing() {
        let c = rect_course(20.0, 1.0).unwrap();
        assert_eq!(c.len(), 81);
        assert_eq!(c[0], (0.0, 0.0));
        assert_eq!(c[20], (20.0, 0.0));
        assert_eq!(c[40], (20.0, 20.0));
        assert_eq!(*c.last().unwrap(), (0.0, 0.0));
        for w in c.windows(2) {
            let d = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn densify_uneven_edge_divides_equally() {
        let c = densify(&[(0.0, 0.0), (2.5, 0.0)], 1.0, false).unwrap();
        assert_eq!(c.len(), 4);
        assert!((c[1].0 - 2.5 / 3.0).abs() < 1e-12);
        assert!(densify(&[], 1.0, false).is_err());
        assert!(densify(&[(0.0, 0.0)], 0.0, false).is_err());
    }

    #[test]
    fn circle_course_closes_at_origin() {
        let c = circle_course(5.0, 1.0).unwrap();
        assert_eq!(c[0], (0.0, 0.0));
        assert_eq!(*c.last().unwrap(), (0.0, 0.0));
        for &(x, y) in &c {
            assert!(((x).hypot(y - 5.0) - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let c = rect_course(3.0, 0.7).unwrap();
        save_trajectory(&c, &path).unwrap();
        assert_eq!(load_trajectory(&path).unwrap(), c);

        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(load_trajectory(&path), Err(CourseError::BadHeader { .. })));
        std::fs::write(&path, "x,y\n1,nan\n").unwrap();
        assert!(matches!(
            load_trajectory(&path),
            Err(CourseError::BadRow { row: 1, .. })
        ));
        assert!(matches!(
            load_trajectory(&dir.path().join("missing.csv")),
            Err(CourseError::Io { .. })
        ));
    }
}
