//! PNG output for `--plots`.

use std::path::Path;

use image::{Rgb, RgbImage};
use pfno_core::Field2D;

use crate::CliError;

/// Blue for -1, white for 0, red for +1; values are clamped.
fn diverging(v: f64) -> Rgb<u8> {
    let t = v.clamp(-1.0, 1.0);
    let fade = |s: f64| (255.0 * (1.0 - s.abs())).round() as u8;
    if t >= 0.0 {
        Rgb([255, fade(t), fade(t)])
    } else {
        Rgb([fade(t), fade(t), 255])
    }
}

/// Row `i` of the field is drawn as image row `n − 1 − i` so `y` points up.
pub fn field_png(f: &Field2D, path: &Path) -> Result<(), CliError> {
    let n = f.n() as u32;
    let img = RgbImage::from_fn(n, n, |x, y| diverging(f.get((n - 1 - y) as usize, x as usize)));
    img.save(path).map_err(|e| CliError::Plot(e.to_string()))
}

/// Polyline plot of `ys` against the sample index on a 400×300 canvas.
pub fn curve_png(ys: &[f64], path: &Path) -> Result<(), CliError> {
    let (w, h) = (400u32, 300u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let finite: Vec<f64> = ys.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() >= 2 {
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let px = |i: usize| 10.0 + (w - 20) as f64 * i as f64 / (ys.len() - 1) as f64;
        let py = |v: f64| (h - 10) as f64 - (h - 20) as f64 * (v - lo) / span;
        for i in 1..ys.len() {
            if !(ys[i - 1].is_finite() && ys[i].is_finite()) {
                continue;
            }
            let (x0, y0, x1, y1) = (px(i - 1), py(ys[i - 1]), px(i), py(ys[i]));
            let k = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
            for s in 0..=k {
                let t = s as f64 / k as f64;
                let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
                img.put_pixel(x.round() as u32, y.round() as u32, Rgb([20, 60, 200]));
            }
        }
    }
    img.save(path).map_err(|e| CliError::Plot(e.to_string()))
}
