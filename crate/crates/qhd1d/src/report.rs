//! Deterministic report emission: CSV with 17-significant-digit decimals,
//! JSON with sorted keys. Identical inputs produce byte-identical files.

use crate::error::{QhdError, Result};
use crate::grid::Field;
use crate::steady::SteadyState;
use crate::transient::Trajectory;
use std::io::Write;
use std::path::Path;

/// 17 significant digits, locale-free.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Serialize any Serialize value with sorted keys and a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let v = serde_json::to_value(value)
        .map_err(|e| QhdError::Config(format!("json serialization failed: {e}")))?;
    let mut f = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(&v)
        .map_err(|e| QhdError::Config(format!("json serialization failed: {e}")))?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Field as two CSV columns (x, value).
pub fn write_field_csv(path: &Path, f: &Field) -> Result<()> {
    let rows: Vec<Vec<String>> = f
        .grid()
        .nodes()
        .zip(f.values().iter())
        .map(|(x, &v)| vec![fmt_float(x), fmt_float(v)])
        .collect();
    write_csv(path, &["x", "value"], &rows)
}

/// Converged state: x, n*, J*, E*, V*, p, q, r.
pub fn write_steady_csv(path: &Path, s: &SteadyState) -> Result<()> {
    let g = s.p.grid();
    let rows: Vec<Vec<String>> = (0..g.len())
        .map(|i| {
            vec![
                fmt_float(g.x(i)),
                fmt_float(s.n_star.values()[i]),
                fmt_float(s.j_star.values()[i]),
                fmt_float(s.e_star.values()[i]),
                fmt_float(s.vstar.values()[i]),
                fmt_float(s.p.values()[i]),
                fmt_float(s.q.values()[i]),
                fmt_float(s.r.values()[i]),
            ]
        })
        .collect();
    write_csv(
        path,
        &["x", "n_star", "j_star", "e_star", "v_star", "p", "q", "r"],
        &rows,
    )
}

/// Trajectory samples, one row per sample.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let rows: Vec<Vec<String>> = traj
        .samples
        .iter()
        .map(|s| {
            vec![
                fmt_float(s.t),
                fmt_float(s.h3_n),
                fmt_float(s.h2_j),
                fmt_float(s.h2_e),
                fmt_float(s.h5_v),
                fmt_float(s.composite),
                fmt_float(s.upsilon0),
                fmt_float(s.upsilon1),
                fmt_float(s.upsilon2),
                fmt_float(s.delta_running),
            ]
        })
        .collect();
    write_csv(
        path,
        &[
            "t",
            "H3_n",
            "H2_J",
            "H2_E",
            "H5_V",
            "composite",
            "upsilon0",
            "upsilon1",
            "upsilon2",
            "delta_running",
        ],
        &rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_float(-0.1), "-1.0000000000000001e-1");
        let x = std::f64::consts::PI * 1e-7;
        let back: f64 = fmt_float(x).parse().unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn csv_files_are_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(33).unwrap();
        let f = Field::from_fn(&g, |x| (x * 3.0).sin());
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_field_csv(&p1, &f).unwrap();
        write_field_csv(&p2, &f).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let text = std::fs::read_to_string(&p1).unwrap();
        assert_eq!(text.lines().count(), 34);
        assert!(text.starts_with("x,value\n"));
    }

    #[test]
    fn json_round_trips_and_sorts_keys() {
        #[derive(serde::Serialize)]
        struct Zeta {
            zulu: f64,
            alpha: f64,
            mid: Vec<f64>,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json(
            &p,
            &Zeta {
                zulu: 1.5e-300,
                alpha: -3.125,
                mid: vec![1.0, 2.0],
            },
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let a = text.find("\"alpha\"").unwrap();
        let z = text.find("\"zulu\"").unwrap();
        assert!(a < z, "keys must be sorted");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["alpha"].as_f64().unwrap(), -3.125);
        assert_eq!(v["zulu"].as_f64().unwrap(), 1.5e-300);
    }
}
