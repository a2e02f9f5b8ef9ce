//! Minimal static line plots rendered straight to PNG.
//!
//! No text is drawn; axis ranges are written next to the image by callers
//! that need them. Rendering is pure integer rasterization, so identical
//! input gives identical bytes.

use std::io::Write;
use std::path::Path;

use image::{ImageEncoder, Rgb, RgbImage};

use crate::error::{Error, Result};

pub const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [255, 127, 14], [148, 103, 189], [23, 190, 207]];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub width: u32,
    pub height: u32,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

const MARGIN: i64 = 40;

impl LinePlot {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, log_y: false, series: Vec::new() }
    }

    pub fn add(&mut self, x: &[f64], y: &[f64]) -> Result<&mut Self> {
        if x.len() != y.len() {
            return Err(Error::Size("plot series x and y differ in length".into()));
        }
        let color = PALETTE[self.series.len() % PALETTE.len()];
        self.series.push(Series { x: x.to_vec(), y: y.to_vec(), color });
        Ok(self)
    }

    fn ty(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            Some(y)
        }
    }

    /// Data extent over finite points (y in log10 when `log_y`).
    pub fn bounds(&self) -> Result<Bounds> {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for (&x, &y) in s.x.iter().zip(&s.y) {
                let Some(y) = self.ty(y).filter(|v| v.is_finite() && x.is_finite()) else { continue };
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !x0.is_finite() {
            return Err(Error::Empty("plot has no finite points".into()));
        }
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5 * a.abs().max(1.0), b + 0.5 * b.abs().max(1.0)) };
        let (y0, y1) = pad(y0, y1);
        let dy = 0.05 * (y1 - y0);
        Ok(Bounds { x: pad(x0, x1), y: (y0 - dy, y1 + dy) })
    }

    pub fn render(&self) -> Result<RgbImage> {
        if self.width < 2 * MARGIN as u32 + 10 || self.height < 2 * MARGIN as u32 + 10 {
            return Err(Error::range("plot size", format!("at least {0}×{0} pixels", 2 * MARGIN + 10)));
        }
        let b = self.bounds()?;
        let mut img = RgbImage::from_pixel(self.width, self.height, Rgb([255, 255, 255]));
        let (w, h) = (self.width as i64, self.height as i64);
        let (l, r, t, btm) = (MARGIN, w - MARGIN / 2, MARGIN / 2, h - MARGIN);
        let px = |x: f64| l + ((x - b.x.0) / (b.x.1 - b.x.0) * (r - l) as f64).round() as i64;
        let py = |y: f64| btm - ((y - b.y.0) / (b.y.1 - b.y.0) * (btm - t) as f64).round() as i64;
        let black = Rgb([0, 0, 0]);
        for (a, c) in [((l, t), (r, t)), ((r, t), (r, btm)), ((r, btm), (l, btm)), ((l, btm), (l, t))] {
            line(&mut img, a, c, black);
        }
        for k in 0..=4 {
            let xt = l + (r - l) * k / 4;
            let yt = btm - (btm - t) * k / 4;
            line(&mut img, (xt, btm), (xt, btm + 5), black);
            line(&mut img, (l - 5, yt), (l, yt), black);
        }
        if !self.log_y && b.y.0 < 0.0 && b.y.1 > 0.0 {
            let y = py(0.0);
            for x in (l..r).step_by(4) {
                put(&mut img, x, y, Rgb([170, 170, 170]));
            }
        }
        for s in &self.series {
            let mut prev: Option<(i64, i64)> = None;
            for (&x, &y) in s.x.iter().zip(&s.y) {
                match self.ty(y).filter(|v| v.is_finite() && x.is_finite()) {
                    Some(y) => {
                        let p = (px(x), py(y));
                        if let Some(q) = prev {
                            line(&mut img, q, p, Rgb(s.color));
                        } else {
                            put(&mut img, p.0, p.1, Rgb(s.color));
                        }
                        prev = Some(p);
                    }
                    None => prev = None,
                }
            }
        }
        Ok(img)
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<()> {
        let img = self.render()?;
        image::codecs::png::PngEncoder::new(w)
            .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
            .map_err(|e| Error::Format(format!("png encode: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_png(std::io::BufWriter::new(f))
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham.
fn line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), c: Rgb<u8>) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x, y, c);
        if (x, y) == b {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_bytes() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (-v / 10.0).exp()).collect();
        let mut p = LinePlot::new(320, 200);
        p.add(&x, &y).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        p.write_png(&mut a).unwrap();
        p.write_png(&mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[1..4], b"PNG");
    }

    #[test]
    fn empty_plot_is_error() {
        let p = LinePlot::new(320, 200);
        assert!(matches!(p.render(), Err(Error::Empty(_))));
        let mut q = LinePlot::new(320, 200);
        q.log_y = true;
        q.add(&[1.0], &[-1.0]).unwrap();
        assert!(q.render().is_err());
    }
}
