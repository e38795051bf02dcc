//! Raster renderer for the cartpole. Pixel classification (background, cart,
//! pole) is a pure function of the physical state; the background color is
//! painted in afterwards, which is exactly what makes visual randomization
//! "visual only".

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cartpole::{CartpolePhysics, CartpoleState};
use crate::error::{Error, Result};

pub const CART_COLOR: [f64; 3] = [0.0, 0.0, 0.0];
pub const POLE_COLOR: [f64; 3] = [0.55, 0.28, 0.07];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// The pole is drawn at this multiple of its physical length so it stays
    /// visible at small resolutions.
    pub pole_draw_scale: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 32,
            height: 32,
            pole_draw_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major, channels in [0, 1].
    pub pixels: Vec<f64>,
}

impl Raster {
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// 8-bit binary PPM (P6) for eyeballing renders.
    pub fn write_ppm<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        w.write_all(&bytes)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_ppm(&mut f)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PixelClass {
    Background = 0,
    Cart = 1,
    Pole = 2,
}

/// Classifies every pixel from the state alone: 0 background, 1 cart, 2 pole.
pub fn render_mask(s: &CartpoleState, physics: &CartpolePhysics, cfg: &RenderConfig) -> Vec<u8> {
    let (w, h) = (cfg.width, cfg.height);
    let mut mask = vec![PixelClass::Background as u8; w * h];
    let scale = w as f64 / (2.0 * physics.x_threshold); // pixels per meter
    let cx = (s.x + physics.x_threshold) * scale;
    let cy = 0.75 * (h as f64 - 1.0);

    let cart_w = ((0.4 * scale).round() as usize).max(3);
    let cart_h = ((0.24 * scale).round() as usize).max(2);
    let cart_top = cy - cart_h as f64 / 2.0;

    let mut put = |x: f64, y: f64, class: PixelClass| {
        let (xi, yi) = (x.round(), y.round());
        if xi >= 0.0 && yi >= 0.0 && (xi as usize) < w && (yi as usize) < h {
            mask[yi as usize * w + xi as usize] = class as u8;
        }
    };

    for dy in 0..cart_h {
        for dx in 0..cart_w {
            put(
                cx - cart_w as f64 / 2.0 + dx as f64 + 0.5,
                cart_top + dy as f64,
                PixelClass::Cart,
            );
        }
    }

    // Pole: a thick line from the cart top, tilted by theta.
    let pole_len = cfg.pole_draw_scale * 2.0 * physics.half_length * scale;
    let thickness = ((0.08 * scale * cfg.pole_draw_scale).round() as usize).max(1);
    let (sin_t, cos_t) = s.theta.sin_cos();
    let samples = (4.0 * pole_len).ceil() as usize;
    for i in 0..=samples {
        let t = i as f64 / samples as f64;
        let px = cx + sin_t * t * pole_len;
        let py = cart_top - cos_t * t * pole_len;
        for j in 0..thickness {
            put(px + j as f64 - (thickness - 1) as f64 / 2.0, py, PixelClass::Pole);
        }
    }

    mask
}

/// Renders the state over a solid background color. Background pixels take
/// exactly `background`; cart and pole pixels take the fixed foreground
/// colors regardless of it.
pub fn render(
    s: &CartpoleState,
    background: [f64; 3],
    physics: &CartpolePhysics,
    cfg: &RenderConfig,
) -> Result<Raster> {
    if background.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::validation(format!(
            "background color {background:?} outside [0,1]"
        )));
    }
    let mask = render_mask(s, physics, cfg);
    let mut pixels = Vec::with_capacity(mask.len() * 3);
    for &m in &mask {
        let color = match m {
            0 => background,
            1 => CART_COLOR,
            _ => POLE_COLOR,
        };
        pixels.extend_from_slice(&color);
    }
    Ok(Raster {
        width: cfg.width,
        height: cfg.height,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: f64, theta: f64) -> CartpoleState {
        CartpoleState {
            x,
            theta,
            ..Default::default()
        }
    }

    #[test]
    fn background_pixels_take_exactly_the_background_color() {
        let p = CartpolePhysics::default();
        let cfg = RenderConfig::default();
        let s = state(0.3, 0.05);
        let white = render(&s, [1.0, 1.0, 1.0], &p, &cfg).unwrap();
        let green = render(&s, [0.0, 1.0, 0.0], &p, &cfg).unwrap();
        let mask = render_mask(&s, &p, &cfg);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let (a, b) = (white.pixel(x, y), green.pixel(x, y));
                if mask[y * cfg.width + x] == 0 {
                    assert_eq!(a, [1.0, 1.0, 1.0]);
                    assert_eq!(b, [0.0, 1.0, 0.0]);
                } else {
                    assert_eq!(a, b, "foreground pixel changed with the background");
                }
            }
        }
        // Corners are never covered by the cart or pole.
        assert_eq!(white.pixel(0, 0), [1.0, 1.0, 1.0]);
        assert_eq!(white.pixel(cfg.width - 1, cfg.height - 1), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn mask_depends_on_cart_position_and_angle() {
        let p = CartpolePhysics::default();
        let cfg = RenderConfig::default();
        let left = render_mask(&state(-2.3, 0.0), &p, &cfg);
        let right = render_mask(&state(2.3, 0.0), &p, &cfg);
        assert_ne!(left, right);

        let upright = render_mask(&state(0.0, 0.0), &p, &cfg);
        let tilted = render_mask(&state(0.0, 12.0f64.to_radians()), &p, &cfg);
        assert_ne!(upright, tilted, "a 12 degree tilt must move pole pixels");
    }

    #[test]
    fn mask_has_both_foreground_classes() {
        let p = CartpolePhysics::default();
        let cfg = RenderConfig::default();
        let mask = render_mask(&state(0.0, 0.0), &p, &cfg);
        assert!(mask.iter().any(|&m| m == 1), "no cart pixels");
        assert!(mask.iter().any(|&m| m == 2), "no pole pixels");
        let fg = mask.iter().filter(|&&m| m != 0).count();
        assert!(fg < mask.len() / 4, "foreground should be sparse");
    }

    #[test]
    fn rendering_is_pure() {
        let p = CartpolePhysics::default();
        let cfg = RenderConfig::default();
        let s = state(-0.7, -0.1);
        let a = render(&s, [0.2, 0.4, 0.9], &p, &cfg).unwrap();
        let b = render(&s, [0.2, 0.4, 0.9], &p, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn larger_resolution_is_supported() {
        let p = CartpolePhysics::default();
        let cfg = RenderConfig {
            width: 84,
            height: 84,
            pole_draw_scale: 2.0,
        };
        let r = render(&state(0.0, 0.1), [0.5, 0.5, 0.5], &p, &cfg).unwrap();
        assert_eq!(r.pixels.len(), 84 * 84 * 3);
        let mask = render_mask(&state(0.0, 0.1), &p, &cfg);
        assert!(mask.iter().any(|&m| m == 2));
    }

    #[test]
    fn rejects_out_of_range_background() {
        let p = CartpolePhysics::default();
        let cfg = RenderConfig::default();
        assert!(render(&state(0.0, 0.0), [1.2, 0.0, 0.0], &p, &cfg).is_err());
    }

    #[test]
    fn ppm_export_has_correct_header_and_size() {
        let p = CartpolePhysics::default();
        let cfg = RenderConfig::default();
        let r = render(&state(0.0, 0.0), [1.0, 1.0, 1.0], &p, &cfg).unwrap();
        let mut buf = Vec::new();
        r.write_ppm(&mut buf).unwrap();
        let header = b"P6\n32 32\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 32 * 32 * 3);
        assert_eq!(&buf[header.len()..header.len() + 3], &[255, 255, 255]);
    }
}
