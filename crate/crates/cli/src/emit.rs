//! Report, table and image writers.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use schottky_dilog::moebius::ComplexPoint;
use schottky_dilog::schottky::Circle;
use serde::Serialize;
use serde_json::Value;

use crate::config::ImageConfig;

const POINT: [u8; 3] = [255, 255, 255];
const OUTLINE: [u8; 3] = [128, 128, 128];

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub results: &'a Value,
    pub diagnostics: &'a [String],
}

pub fn report_bytes(report: &Report<'_>) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s.into_bytes()
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| format!("cannot write stdout: {e}"))
        }
    }
}

/// CSV text from a header and rows of already formatted cells.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s.into_bytes()
}

pub fn cell(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v}").expect("string write");
    s
}

/// Plane coordinates of the centre of pixel `(i, j)` in the window
/// `[-R, R]^2`, `j = 0` at the top.
pub fn pixel_center(img: &ImageConfig, i: usize, j: usize) -> (f64, f64) {
    let r = img.window;
    let x = -r + (i as f64 + 0.5) * 2.0 * r / img.width as f64;
    let y = r - (j as f64 + 0.5) * 2.0 * r / img.height as f64;
    (x, y)
}

fn pixel_of(img: &ImageConfig, z: ComplexPoint) -> Option<(usize, usize)> {
    let w = z.finite()?;
    let r = img.window;
    let u = (w.re + r) / (2.0 * r) * img.width as f64;
    let v = (r - w.im) / (2.0 * r) * img.height as f64;
    if !(u >= 0.0 && v >= 0.0 && u < img.width as f64 && v < img.height as f64) {
        return None;
    }
    Some((u as usize, v as usize))
}

/// Binary P6 image of `points`, optionally over the outlines of `disks`.
pub fn render_ppm(points: &[ComplexPoint], disks: &[Circle], img: &ImageConfig) -> Vec<u8> {
    let (w, h) = (img.width, img.height);
    let mut pixels = vec![0u8; 3 * w * h];
    if img.circles {
        let half = img.window / w.min(h) as f64;
        for j in 0..h {
            for i in 0..w {
                let (x, y) = pixel_center(img, i, j);
                let on = disks.iter().any(|d| ((x - d.center.re).hypot(y - d.center.im) - d.radius).abs() < half);
                if on {
                    pixels[3 * (j * w + i)..3 * (j * w + i) + 3].copy_from_slice(&OUTLINE);
                }
            }
        }
    }
    for &p in points {
        if let Some((i, j)) = pixel_of(img, p) {
            pixels[3 * (j * w + i)..3 * (j * w + i) + 3].copy_from_slice(&POINT);
        }
    }
    let mut out = format!("P6 {w} {h} 255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}
