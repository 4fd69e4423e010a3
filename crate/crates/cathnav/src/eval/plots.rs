//! Plot emission without a plotting dependency: scatter, histogram, and
//! violin renderings on raw RGB buffers, each paired with a delimited-text
//! sidecar carrying the exact plotted numbers.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::data::DIM_NAMES;
use crate::error::Result;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 48]);
const GRID: Rgb<u8> = Rgb([225, 225, 230]);
const POINT: Rgb<u8> = Rgb([46, 98, 166]);
const ACCENT: Rgb<u8> = Rgb([190, 60, 50]);
const FILL: Rgb<u8> = Rgb([120, 150, 196]);

const W: u32 = 520;
const H: u32 = 420;
const ML: i64 = 64;
const MR: i64 = 18;
const MT: i64 = 18;
const MB: i64 = 44;

/// 3x5 glyphs for tick labels; rows are 3-bit masks, MSB left.
fn glyph(c: char) -> Option<[u8; 5]> {
    Some(match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b011, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        'e' => [0b000, 0b111, 0b110, 0b100, 0b111],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'R' => [0b110, 0b101, 0b110, 0b101, 0b101],
        'K' => [0b101, 0b110, 0b100, 0b110, 0b101],
        _ => return None,
    })
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if row & (0b100 >> rx) != 0 {
                        put(img, cx + rx as i64, y + ry as i64, color);
                    }
                }
            }
        }
        cx += 4;
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".into()
    } else if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else if a < 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.1}")
    }
}

/// Plot area mapping data coordinates to pixels.
struct Frame {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            if hi > lo {
                let m = 0.05 * (hi - lo);
                (lo - m, hi + m)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (xmin, xmax) = pad(xmin, xmax);
        let (ymin, ymax) = pad(ymin, ymax);
        Self {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> i64 {
        let w = (W as i64 - ML - MR) as f64;
        ML + ((x - self.xmin) / (self.xmax - self.xmin) * w).round() as i64
    }

    fn py(&self, y: f64) -> i64 {
        let h = (H as i64 - MT - MB) as f64;
        H as i64 - MB - ((y - self.ymin) / (self.ymax - self.ymin) * h).round() as i64
    }

    fn axes(&self, img: &mut RgbImage) {
        for x in ML..=(W as i64 - MR) {
            put(img, x, H as i64 - MB, AXIS);
        }
        for y in MT..=(H as i64 - MB) {
            put(img, ML, y, AXIS);
        }
        for i in 0..=4 {
            let xv = self.xmin + (self.xmax - self.xmin) * i as f64 / 4.0;
            let yv = self.ymin + (self.ymax - self.ymin) * i as f64 / 4.0;
            let xp = self.px(xv);
            let yp = self.py(yv);
            for y in MT..=(H as i64 - MB) {
                put(img, xp, y, GRID);
            }
            for x in ML..=(W as i64 - MR) {
                put(img, x, yp, GRID);
            }
            for t in 0..4 {
                put(img, xp, H as i64 - MB + t, AXIS);
                put(img, ML - t, yp, AXIS);
            }
            let xl = tick_label(xv);
            draw_text(
                img,
                xp - 2 * xl.len() as i64,
                H as i64 - MB + 8,
                &xl,
                AXIS,
            );
            let yl = tick_label(yv);
            draw_text(img, ML - 6 - 4 * yl.len() as i64, yp - 2, &yl, AXIS);
        }
    }

    fn line(&self, img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
        let (px0, py0, px1, py1) = (self.px(x0), self.py(y0), self.px(x1), self.py(y1));
        let steps = (px1 - px0).abs().max((py1 - py0).abs()).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let x = px0 as f64 + t * (px1 - px0) as f64;
            let y = py0 as f64 + t * (py1 - py0) as f64;
            put(img, x.round() as i64, y.round() as i64, color);
        }
    }

    fn dot(&self, img: &mut RgbImage, x: f64, y: f64, color: Rgb<u8>) {
        let (cx, cy) = (self.px(x), self.py(y));
        for dy in 0..2 {
            for dx in 0..2 {
                put(img, cx + dx, cy + dy, color);
            }
        }
    }
}

fn blank() -> RgbImage {
    RgbImage::from_pixel(W, H, BG)
}

/// Uniform binning over [min, max]; the maximum lands in the last bin.
/// Returns bins+1 edges and bins counts.
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    assert!(bins >= 1);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (vec![0.0; bins + 1], vec![0; bins]);
    }
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for v in finite {
        let mut b = ((v - lo) / width) as usize;
        if b >= bins {
            b = bins - 1;
        }
        counts[b] += 1;
    }
    (edges, counts)
}

/// Gaussian kernel density on an even grid, Silverman bandwidth.
pub fn kde(values: &[f64], grid_len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    assert!(n >= 1 && grid_len >= 2);
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| sorted[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    let mut h = 0.9 * spread * (n as f64).powf(-0.2);
    if h <= 0.0 {
        h = 1e-3 * (mean.abs() + 1.0);
    }
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[n - 1] + 3.0 * h;
    let grid: Vec<f64> = (0..grid_len)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_len - 1) as f64)
        .collect();
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * n as f64);
    let density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            values
                .iter()
                .map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    (grid, density)
}

/// True-vs-predicted scatter and error histogram per dimension, with CSV
/// sidecars. Returns the written file paths.
pub fn emit_plots(
    predictions: &ndarray::Array2<f64>,
    targets: &ndarray::Array2<f64>,
    hist_bins: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (j, dim) in DIM_NAMES.iter().enumerate() {
        let truth: Vec<f64> = targets.column(j).to_vec();
        let pred: Vec<f64> = predictions.column(j).to_vec();

        // Scatter with identity line on a shared square range.
        let lo = truth
            .iter()
            .chain(pred.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = truth
            .iter()
            .chain(pred.iter())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut img = blank();
        let frame = Frame::new(lo, hi, lo, hi);
        frame.axes(&mut img);
        frame.line(&mut img, lo, lo, hi, hi, ACCENT);
        for (t, p) in truth.iter().zip(pred.iter()) {
            frame.dot(&mut img, *t, *p, POINT);
        }
        let scatter_png = out_dir.join(format!("{dim}_scatter.png"));
        img.save(&scatter_png)?;
        let scatter_csv = out_dir.join(format!("{dim}_scatter.csv"));
        {
            let mut w = csv::Writer::from_path(&scatter_csv)?;
            w.write_record(["true", "predicted"])?;
            for (t, p) in truth.iter().zip(pred.iter()) {
                w.write_record([format!("{t:.17e}"), format!("{p:.17e}")])?;
            }
            w.flush()?;
        }

        // Error histogram.
        let errors: Vec<f64> = pred.iter().zip(truth.iter()).map(|(p, t)| p - t).collect();
        let (edges, counts) = histogram(&errors, hist_bins);
        let max_count = counts.iter().copied().max().unwrap_or(1).max(1);
        let mut img = blank();
        let frame = Frame::new(edges[0], edges[hist_bins], 0.0, max_count as f64);
        frame.axes(&mut img);
        for (b, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let x0 = frame.px(edges[b]) + 1;
            let x1 = frame.px(edges[b + 1]).max(x0);
            let y1 = frame.py(0.0);
            let y0 = frame.py(c as f64);
            for x in x0..=x1 {
                for y in y0..y1 {
                    put(&mut img, x, y, FILL);
                }
            }
        }
        frame.line(&mut img, 0.0, 0.0, 0.0, max_count as f64, ACCENT);
        let hist_png = out_dir.join(format!("{dim}_hist.png"));
        img.save(&hist_png)?;
        let hist_csv = out_dir.join(format!("{dim}_hist.csv"));
        {
            let mut w = csv::Writer::from_path(&hist_csv)?;
            w.write_record(["bin_left", "bin_right", "count"])?;
            for (b, &c) in counts.iter().enumerate() {
                w.write_record([
                    format!("{:.17e}", edges[b]),
                    format!("{:.17e}", edges[b + 1]),
                    format!("{c}"),
                ])?;
            }
            w.flush()?;
        }
        written.extend([scatter_png, scatter_csv, hist_png, hist_csv]);
    }
    Ok(written)
}

/// One violin figure per split showing the raw state distribution of each
/// action dimension (T, R, K left to right), plus a density sidecar.
pub fn emit_violin(
    split_name: &str,
    states: &[[f64; 3]],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let grid_len = 80;
    let mut per_dim: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for j in 0..3 {
        let vals: Vec<f64> = states.iter().map(|s| s[j]).collect();
        per_dim.push(kde(&vals, grid_len));
    }
    let ymin = per_dim
        .iter()
        .map(|(g, _)| g[0])
        .fold(f64::INFINITY, f64::min);
    let ymax = per_dim
        .iter()
        .map(|(g, _)| g[grid_len - 1])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut img = blank();
    let frame = Frame::new(0.0, 4.0, ymin, ymax);
    frame.axes(&mut img);
    for (j, (grid, density)) in per_dim.iter().enumerate() {
        let center = (j + 1) as f64;
        let dmax = density.iter().cloned().fold(f64::MIN, f64::max).max(1e-300);
        for (gi, &y) in grid.iter().enumerate() {
            let half = 0.38 * density[gi] / dmax;
            let x0 = frame.px(center - half);
            let x1 = frame.px(center + half);
            let yp = frame.py(y);
            for x in x0..=x1 {
                put(&mut img, x, yp, FILL);
            }
        }
        draw_text(
            &mut img,
            frame.px(center) - 1,
            H as i64 - MB + 16,
            ["T", "R", "K"][j],
            AXIS,
        );
    }
    let png = out_dir.join(format!("violin_{split_name}.png"));
    img.save(&png)?;
    let csv_path = out_dir.join(format!("violin_{split_name}.csv"));
    {
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["dimension", "value", "density"])?;
        for (j, (grid, density)) in per_dim.iter().enumerate() {
            for (g, d) in grid.iter().zip(density.iter()) {
                w.write_record([
                    DIM_NAMES[j].to_string(),
                    format!("{g:.17e}"),
                    format!("{d:.17e}"),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(vec![png, csv_path])
}
