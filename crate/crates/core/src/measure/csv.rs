//! Plain-text measure files.
//!
//! Empirical measures: header `x1,...,xd,w`, one atom per row.
//! Grid densities: header `axis,min,max,nodes`, one row per axis, then a
//! `value` line followed by one node value per row (row-major).

use std::fs;
use std::path::Path;

use super::{EmpiricalMeasure, GridDensity, Measure};
use crate::error::{Error, Result};
use crate::grid::Axis;

const GRID_HEADER: [&str; 4] = ["axis", "min", "max", "nodes"];

pub fn write_measure_string(m: &Measure) -> String {
    let mut out = String::new();
    match m {
        Measure::Empirical(e) => {
            let header: Vec<String> = (1..=e.dim()).map(|k| format!("x{k}")).collect();
            out.push_str(&header.join(","));
            out.push_str(",w\n");
            for (p, w) in e.points().zip(e.weights()) {
                for c in p {
                    out.push_str(&format!("{c:?},"));
                }
                out.push_str(&format!("{w:?}\n"));
            }
        }
        Measure::Grid(g) => {
            out.push_str(&GRID_HEADER.join(","));
            out.push('\n');
            for (k, a) in g.axes().iter().enumerate() {
                out.push_str(&format!("{k},{:?},{:?},{}\n", a.min, a.max, a.nodes));
            }
            out.push_str("value\n");
            for v in g.values() {
                out.push_str(&format!("{v:?}\n"));
            }
        }
    }
    out
}

pub fn write_measure(path: impl AsRef<Path>, m: &Measure) -> Result<()> {
    fs::write(path, write_measure_string(m))?;
    Ok(())
}

pub fn read_measure(path: impl AsRef<Path>) -> Result<Measure> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    read_measure_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_measure_str(text: &str) -> Result<Measure> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    let header = rows.first().ok_or_else(|| Error::Parse("empty measure file".into()))?;
    let fields: Vec<&str> = header.iter().collect();
    if fields == GRID_HEADER {
        parse_grid(&rows[1..])
    } else {
        parse_empirical(&fields, &rows[1..])
    }
}

fn number(field: &str, line: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse(format!("row {line}: `{field}` is not a number")))
}

fn parse_empirical(header: &[&str], rows: &[::csv::StringRecord]) -> Result<Measure> {
    let dim = header.len().saturating_sub(1);
    let well_formed = dim >= 1
        && header.last() == Some(&"w")
        && header[..dim].iter().enumerate().all(|(k, h)| *h == format!("x{}", k + 1));
    if !well_formed {
        return Err(Error::Parse(format!("unrecognized header `{}`", header.join(","))));
    }
    let mut coords = Vec::with_capacity(rows.len() * dim);
    let mut weights = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        if rec.len() != dim + 1 {
            return Err(Error::Parse(format!(
                "row {}: expected {} fields, found {}",
                i + 2,
                dim + 1,
                rec.len()
            )));
        }
        for f in rec.iter().take(dim) {
            coords.push(number(f, i + 2)?);
        }
        weights.push(number(&rec[dim], i + 2)?);
    }
    Ok(EmpiricalMeasure::from_flat(dim, coords, Some(weights))?.into())
}

fn parse_grid(rows: &[::csv::StringRecord]) -> Result<Measure> {
    let split = rows
        .iter()
        .position(|r| r.len() == 1 && &r[0] == "value")
        .ok_or_else(|| Error::Parse("grid file lacks a `value` line".into()))?;
    let mut axes = Vec::with_capacity(split);
    for (k, rec) in rows[..split].iter().enumerate() {
        if rec.len() != 4 {
            return Err(Error::Parse(format!("axis row {k}: expected 4 fields")));
        }
        if rec[0].parse::<usize>().ok() != Some(k) {
            return Err(Error::Parse(format!("axis rows out of order at `{}`", &rec[0])));
        }
        let nodes = rec[3]
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("axis {k}: bad node count `{}`", &rec[3])))?;
        axes.push(Axis::new(number(&rec[1], k + 2)?, number(&rec[2], k + 2)?, nodes)?);
    }
    let values = rows[split + 1..]
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.len() != 1 {
                return Err(Error::Parse(format!("value row {i}: expected one field")));
            }
            number(&rec[0], split + i + 3)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GridDensity::new(axes, values)?.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empirical_round_trip_is_exact() {
        let m: Measure = EmpiricalMeasure::new(
            &[vec![0.1, -2.0], vec![1.0 / 3.0, 5.5]],
            Some(&[0.3, 0.7]),
        )
        .unwrap()
        .into();
        let text = write_measure_string(&m);
        assert!(text.starts_with("x1,x2,w\n"));
        assert_eq!(read_measure_str(&text).unwrap(), m);
    }

    #[test]
    fn grid_round_trip_is_exact() {
        let axes = vec![Axis::new(-3.0, 3.0, 31).unwrap()];
        let m: Measure = GridDensity::gaussian(axes, &[0.2], 0.7).unwrap().into();
        let text = write_measure_string(&m);
        assert!(text.starts_with("axis,min,max,nodes\n0,-3.0,3.0,31\nvalue\n"));
        assert_eq!(read_measure_str(&text).unwrap(), m);
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        assert!(matches!(read_measure_str(""), Err(Error::Parse(_))));
        assert!(matches!(read_measure_str("a,b\n1,2\n"), Err(Error::Parse(_))));
        assert!(matches!(read_measure_str("x1,w\n0.0,abc\n"), Err(Error::Parse(_))));
        assert!(matches!(read_measure_str("x1,w\n0.0\n"), Err(Error::Parse(_))));
        assert!(matches!(read_measure_str("axis,min,max,nodes\n0,0,1,10\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn hand_written_files_parse() {
        let m = read_measure_str("x1,w\n0, 1\n").unwrap();
        assert_eq!(m, Measure::Empirical(EmpiricalMeasure::dirac(&[0.0]).unwrap()));
    }
}
