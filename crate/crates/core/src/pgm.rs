//! 16-bit PGM heatmap export.
//!
//! Grids are written as binary `P5` with maxval 65535 (big-endian samples,
//! row-major). Values are scaled linearly into the sample range; the scale
//! factor and the source maximum go to a `<name>.scale.txt` sidecar so the
//! original values can be recovered. Non-finite values map to the maximum
//! sample and are noted in the sidecar.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub fn write_pgm16(path: &Path, width: usize, height: usize, values: &[f64]) -> io::Result<()> {
    assert_eq!(values.len(), width * height);
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0_f64, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };

    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{width} {height}\n65535\n")?;
    for &v in values {
        let sample = if v.is_finite() {
            (v * scale).round().clamp(0.0, 65535.0) as u16
        } else {
            65535
        };
        out.write_all(&sample.to_be_bytes())?;
    }
    out.flush()?;

    let sidecar = path.with_extension("scale.txt");
    let mut side = BufWriter::new(File::create(sidecar)?);
    writeln!(side, "scale = {scale}")?;
    writeln!(side, "max = {max}")?;
    writeln!(side, "non_finite_sample = 65535")?;
    side.flush()
}
