//! Cartesian k-space reconstruction: reorder ADC samples onto the k-space
//! grid, centered inverse 2-D DFT, magnitude image output.

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::sampling::AdcStream;
use crate::{Error, Result};

/// Fully populated Cartesian k-space matrix, row-major `[line][readout]`.
/// Row `j` holds ky index `j - n_lines/2`, column `i` kx index `i - n_ro/2`.
#[derive(Debug, Clone)]
pub struct KSpaceGrid {
    pub n_ro: usize,
    pub n_lines: usize,
    pub data: Vec<Complex64>,
}

/// Reorders one coil's samples onto the grid using the stream metadata:
/// acquisition order is line-major; reversed lines are flipped; an explicit
/// line order (interleaved acquisitions) remaps rows.
pub fn grid_cartesian(stream: &AdcStream, coil: usize) -> Result<KSpaceGrid> {
    let [n_ro, n_lines] = stream
        .meta
        .matrix
        .ok_or_else(|| Error::Integrity("stream metadata lacks a matrix".into()))?;
    let (n_ro, n_lines) = (n_ro as usize, n_lines as usize);
    if coil >= stream.num_coils {
        return Err(Error::Integrity(format!(
            "coil {coil} out of range ({} coils)",
            stream.num_coils
        )));
    }
    let samples = stream.coil(coil);
    if samples.len() != n_ro * n_lines {
        let missing = n_lines.saturating_sub(samples.len() / n_ro);
        return Err(Error::Integrity(format!(
            "stream has {} samples, matrix {n_ro}x{n_lines} needs {} (about {missing} lines missing)",
            samples.len(),
            n_ro * n_lines
        )));
    }
    if let Some(rev) = &stream.meta.reversed_lines {
        if rev.len() != n_lines {
            return Err(Error::Integrity(format!(
                "reversed_lines has {} entries for {n_lines} lines",
                rev.len()
            )));
        }
    }
    if let Some(order) = &stream.meta.line_order {
        if order.len() != n_lines {
            return Err(Error::Integrity(format!(
                "line_order has {} entries for {n_lines} lines",
                order.len()
            )));
        }
        let mut seen = vec![false; n_lines];
        for &row in order {
            if row as usize >= n_lines || seen[row as usize] {
                return Err(Error::Integrity(format!(
                    "line_order row {row} out of range or repeated"
                )));
            }
            seen[row as usize] = true;
        }
    }

    let mut data = vec![Complex64::new(0.0, 0.0); n_ro * n_lines];
    for acq in 0..n_lines {
        let row = match &stream.meta.line_order {
            Some(order) => order[acq] as usize,
            None => acq,
        };
        let reversed = stream
            .meta
            .reversed_lines
            .as_ref()
            .map(|r| r[acq])
            .unwrap_or(false);
        let src = &samples[acq * n_ro..(acq + 1) * n_ro];
        let dst = &mut data[row * n_ro..(row + 1) * n_ro];
        if reversed {
            for (i, v) in src.iter().enumerate() {
                dst[n_ro - 1 - i] = *v;
            }
        } else {
            dst.copy_from_slice(src);
        }
    }
    Ok(KSpaceGrid {
        n_ro,
        n_lines,
        data,
    })
}

fn roll<T: Copy + Default>(v: &[T], shift: usize) -> Vec<T> {
    let n = v.len();
    let mut out = vec![T::default(); n];
    for (i, &x) in v.iter().enumerate() {
        out[(i + shift) % n] = x;
    }
    out
}

fn shift2<T: Copy + Default>(data: &[T], w: usize, h: usize, sx: usize, sy: usize) -> Vec<T> {
    let mut out = vec![T::default(); data.len()];
    for y in 0..h {
        let row = roll(&data[y * w..(y + 1) * w], sx);
        let ty = (y + sy) % h;
        out[ty * w..(ty + 1) * w].copy_from_slice(&row);
    }
    out
}

/// Centered inverse 2-D DFT magnitude. The k-space center (matrix center)
/// maps to the image center; output is normalized by the matrix size so a
/// unit delta at the k-space center gives a constant 1/(nx*ny) image.
pub fn ifft2_magnitude(grid: &KSpaceGrid) -> Vec<f64> {
    let (w, h) = (grid.n_ro, grid.n_lines);
    // ifftshift: move the centered grid to DFT order.
    let mut data = shift2(&grid.data, w, h, w.div_ceil(2), h.div_ceil(2));

    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(w);
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_inverse(h);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }

    // fftshift back to a centered image.
    let data = shift2(&data, w, h, w / 2, h / 2);
    let norm = 1.0 / (w * h) as f64;
    data.iter().map(|v| v.norm() * norm).collect()
}

/// Root sum of squares over per-coil magnitude images.
pub fn rss_combine(images: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = images
        .first()
        .map(|i| i.len())
        .ok_or_else(|| Error::Argument("no images to combine".into()))?;
    if images.iter().any(|i| i.len() != n) {
        return Err(Error::Integrity("coil images differ sizes".into()));
    }
    Ok((0..n)
        .map(|i| images.iter().map(|img| img[i] * img[i]).sum::<f64>().sqrt())
        .collect())
}

#[derive(Serialize)]
struct ImageSidecar {
    width: usize,
    height: usize,
    max_value: f64,
    pgm: &'static str,
    raw: &'static str,
}

/// Writes a 16-bit binary PGM (max-normalized) plus a raw little-endian f32
/// copy and a JSON sidecar describing both.
pub fn write_image(
    img: &[f64],
    width: usize,
    height: usize,
    pgm: &mut impl Write,
    raw: &mut impl Write,
    sidecar: &mut impl Write,
) -> Result<()> {
    if img.len() != width * height {
        return Err(Error::Integrity(format!(
            "image has {} pixels, expected {width}x{height}",
            img.len()
        )));
    }
    let max = img.iter().cloned().fold(0.0, f64::max);
    write!(pgm, "P5\n{width} {height}\n65535\n")?;
    for v in img {
        let scaled = if max > 0.0 {
            (v / max * 65535.0).round() as u16
        } else {
            0
        };
        pgm.write_all(&scaled.to_be_bytes())?;
    }
    for v in img {
        raw.write_all(&(*v as f32).to_le_bytes())?;
    }
    let side = ImageSidecar {
        width,
        height,
        max_value: max,
        pgm: "P5 16-bit big-endian, max-normalized",
        raw: "f32 little-endian, row-major",
    };
    let text = serde_json::to_string_pretty(&side)
        .map_err(|e| Error::Integrity(format!("sidecar encode: {e}")))?;
    sidecar.write_all(text.as_bytes())?;
    sidecar.write_all(b"\n")?;
    Ok(())
}
