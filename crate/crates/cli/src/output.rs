//! CSV helpers. Floats are written with Rust's shortest round-trip
//! formatting so files are byte-identical across runs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// `a;b;…`, kept free of commas so it fits in one CSV cell.
pub fn fmt_mu(mu: &[f64]) -> String {
    mu.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_csv<R: AsRef<[String]>>(path: &Path, rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.write_record(r.as_ref())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -3.25e-17, 1e300, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_mu(&[1.25, -1e6]), "1.25;-1000000");
    }
}
