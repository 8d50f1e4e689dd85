//! CSV persistence for series and pixel grids.
//!
//! One file per series: header `t,c0,...,c{C-1},observed`, floats
//! printed with 17 significant digits so parsing recovers the exact
//! bits. Grids use a directory of `{row}_{col}.csv` files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::mat::Mat;

use super::{DynError, PixelGrid, Result, TimeSeries};

pub fn write_series(path: &Path, s: &TimeSeries) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    for c in 0..s.channels() {
        out.push_str(&format!(",c{c}"));
    }
    out.push_str(",observed\n");
    for i in 0..s.len() {
        out.push_str(&format!("{:.16e}", s.times()[i]));
        for v in s.row(i) {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push_str(if s.mask()[i] { ",1\n" } else { ",0\n" });
    }
    let mut f = fs::File::create(path).map_err(|e| DynError::Io(e.to_string()))?;
    f.write_all(out.as_bytes())
        .map_err(|e| DynError::Io(e.to_string()))
}

pub fn read_series(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).map_err(|e| DynError::Io(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| DynError::Io("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"t") || cols.last() != Some(&"observed") || cols.len() < 3 {
        return Err(DynError::Io(format!("bad header in {}", path.display())));
    }
    let channels = cols.len() - 2;
    let mut times = Vec::new();
    let mut mask = Vec::new();
    let mut data = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != channels + 2 {
            return Err(DynError::Io(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                channels + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| DynError::Io(format!("line {}: {e}", lineno + 2)))
        };
        times.push(parse(fields[0])?);
        for f in &fields[1..=channels] {
            data.push(parse(f)?);
        }
        mask.push(match fields[channels + 1] {
            "1" => true,
            "0" => false,
            other => {
                return Err(DynError::Io(format!(
                    "line {}: bad observed flag `{other}`",
                    lineno + 2
                )))
            }
        });
    }
    let rows = times.len();
    TimeSeries::new(times, Mat::from_vec(rows, channels, data), mask)
}

pub fn write_grid(dir: &Path, g: &PixelGrid) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DynError::Io(e.to_string()))?;
    for r in 0..g.height {
        for c in 0..g.width {
            let path = dir.join(format!("{r}_{c}.csv"));
            write_series(&path, g.pixel(r * g.width + c))?;
        }
    }
    Ok(())
}

pub fn read_grid(dir: &Path) -> Result<PixelGrid> {
    // Infer dimensions from the file names present.
    let mut max_r = 0usize;
    let mut max_c = 0usize;
    let mut found = 0usize;
    for entry in fs::read_dir(dir).map_err(|e| DynError::Io(e.to_string()))? {
        let entry = entry.map_err(|e| DynError::Io(e.to_string()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".csv") {
            if let Some((r, c)) = stem.split_once('_') {
                if let (Ok(r), Ok(c)) = (r.parse::<usize>(), c.parse::<usize>()) {
                    max_r = max_r.max(r);
                    max_c = max_c.max(c);
                    found += 1;
                }
            }
        }
    }
    let (height, width) = (max_r + 1, max_c + 1);
    if found == 0 || found != height * width {
        return Err(DynError::Io(format!(
            "{}: found {found} pixel files, expected a full {height}x{width} grid",
            dir.display()
        )));
    }
    let mut series = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            series.push(read_series(&dir.join(format!("{r}_{c}.csv")))?);
        }
    }
    PixelGrid::new(height, width, series)
}
