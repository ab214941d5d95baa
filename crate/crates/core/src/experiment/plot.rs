//! Minimal deterministic raster plots: line charts, grouped bars and
//! diverging heatmaps. Legends live in the accompanying markdown.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;

/// Series colors, in legend order.
pub const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

pub const PALETTE_NAMES: [&str; 8] = ["blue", "orange", "green", "red", "purple", "brown", "pink", "grey"];

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const MARGIN: u32 = 24;

pub fn color(i: usize) -> Rgb<u8> {
    Rgb(PALETTE[i % PALETTE.len()])
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham line, `thick` pixels wide.
pub fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>, thick: i64) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        for ox in 0..thick {
            for oy in 0..thick {
                put(img, x + ox - thick / 2, y + oy - thick / 2, c);
            }
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

pub fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    for y in y0.min(y1)..y0.max(y1) {
        for x in x0.min(x1)..x0.max(x1) {
            put(img, x, y, c);
        }
    }
}

fn finite_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn frame(img: &mut RgbImage) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let m = MARGIN as i64;
    for k in 1..5 {
        let y = m + (h - 2 * m) * k / 5;
        line(img, (m, y), (w - m, y), GRID, 1);
    }
    line(img, (m, h - m), (w - m, h - m), AXIS, 1);
    line(img, (m, m), (m, h - m), AXIS, 1);
}

/// One polyline per series over a shared axis range.
pub fn line_chart(series: &[Vec<(f64, f64)>], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    frame(&mut img);
    let (x0, x1) = finite_range(series.iter().flatten().map(|p| p.0));
    let (y0, y1) = finite_range(series.iter().flatten().map(|p| p.1));
    let m = MARGIN as f64;
    let (pw, ph) = (width as f64 - 2.0 * m, height as f64 - 2.0 * m);
    let to_px = |(x, y): (f64, f64)| (((x - x0) / (x1 - x0) * pw + m).round() as i64, (m + ph - (y - y0) / (y1 - y0) * ph).round() as i64);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<(i64, i64)> = s.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&p| to_px(p)).collect();
        for w in pts.windows(2) {
            line(&mut img, w[0], w[1], color(i), 2);
        }
        for &(x, y) in &pts {
            fill_rect(&mut img, x - 2, y - 2, x + 3, y + 3, color(i));
        }
    }
    img
}

/// `groups[g][s]`: bar `s` of group `g`; bars share a zero-based axis.
pub fn bar_chart(groups: &[Vec<f64>], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, WHITE);
    frame(&mut img);
    let vals = groups.iter().flatten().copied().chain([0.0]);
    let (lo, hi) = finite_range(vals);
    let m = MARGIN as f64;
    let (pw, ph) = (width as f64 - 2.0 * m, height as f64 - 2.0 * m);
    let y_of = |v: f64| (m + ph - (v - lo) / (hi - lo) * ph).round() as i64;
    let slot = pw / groups.len().max(1) as f64;
    for (g, bars) in groups.iter().enumerate() {
        let bw = slot * 0.8 / bars.len().max(1) as f64;
        for (s, &v) in bars.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let x = m + g as f64 * slot + slot * 0.1 + s as f64 * bw;
            fill_rect(&mut img, x.round() as i64, y_of(0.0), (x + bw - 1.0).round() as i64, y_of(v), color(s));
        }
    }
    line(&mut img, (MARGIN as i64, y_of(0.0)), (width as i64 - MARGIN as i64, y_of(0.0)), AXIS, 1);
    img
}

/// Blue (-1) through white (0) to red (+1).
pub fn diverging(v: f64) -> Rgb<u8> {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |t: f64| (255.0 * (1.0 - t)).round() as u8;
    if v >= 0.0 {
        Rgb([255, fade(v), fade(v)])
    } else {
        Rgb([fade(-v), fade(-v), 255])
    }
}

/// One `cell`-sized square per value, rows top to bottom.
pub fn heatmap(rows: &[Vec<f64>], cell: u32) -> RgbImage {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0).max(1) as u32;
    let mut img = RgbImage::from_pixel(cols * cell + 1, rows.len().max(1) as u32 * cell + 1, AXIS);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let (x, y) = ((c as u32 * cell + 1) as i64, (r as u32 * cell + 1) as i64);
            fill_rect(&mut img, x, y, x + cell as i64 - 1, y + cell as i64 - 1, diverging(v));
        }
    }
    img
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
