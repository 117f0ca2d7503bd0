//! Anti-aliased shape rasterization on a textured background.

use clue_tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub type Rgb = [f64; 3];

pub const OBJECT: Rgb = [0.92, 0.12, 0.10];
pub const CONTAINER: Rgb = [0.15, 0.25, 0.85];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// center and radius in unit coordinates
    Disc { x: f64, y: f64, r: f64 },
    /// center, half extents and rotation (radians) in unit coordinates
    Rect {
        x: f64,
        y: f64,
        half_w: f64,
        half_h: f64,
        angle: f64,
    },
}

impl Shape {
    /// Signed distance in pixels from pixel center `(px, py)` to the shape boundary.
    fn signed_distance(&self, px: f64, py: f64, size: f64) -> f64 {
        match *self {
            Shape::Disc { x, y, r } => {
                let (dx, dy) = (px - x * size, py - y * size);
                (dx * dx + dy * dy).sqrt() - r * size
            }
            Shape::Rect {
                x,
                y,
                half_w,
                half_h,
                angle,
            } => {
                let (dx, dy) = (px - x * size, py - y * size);
                let (s, c) = angle.sin_cos();
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                let qx = u.abs() - half_w * size;
                let qy = v.abs() - half_h * size;
                let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
                outside + qx.max(qy).min(0.0)
            }
        }
    }
}

/// RGB image under construction, planar layout.
#[derive(Debug, Clone)]
pub struct Canvas {
    size: usize,
    planes: [Vec<f64>; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct Texture {
    pub base: Rgb,
    pub amplitude: f64,
    pub freq: (f64, f64),
    pub phase: f64,
}

impl Texture {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut jitter = || rng.random_range(-0.04..0.04);
        let base = [0.48 + jitter(), 0.42 + jitter(), 0.34 + jitter()];
        Texture {
            base,
            amplitude: rng.random_range(0.03..0.06),
            freq: (rng.random_range(-3.0..3.0), rng.random_range(1.0..3.0)),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }
}

impl Canvas {
    pub fn new(size: usize, texture: &Texture) -> Self {
        let mut planes = [vec![0.0; size * size], vec![0.0; size * size], vec![0.0; size * size]];
        for y in 0..size {
            for x in 0..size {
                let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
                let wave = texture.amplitude
                    * (std::f64::consts::TAU * (texture.freq.0 * u + texture.freq.1 * v)
                        + texture.phase)
                        .sin();
                for c in 0..3 {
                    planes[c][y * size + x] = texture.base[c] + wave;
                }
            }
        }
        Canvas { size, planes }
    }

    pub fn draw(&mut self, shape: &Shape, color: Rgb) {
        let size = self.size as f64;
        for y in 0..self.size {
            for x in 0..self.size {
                let d = shape.signed_distance(x as f64 + 0.5, y as f64 + 0.5, size);
                let cover = (0.5 - d).clamp(0.0, 1.0);
                if cover > 0.0 {
                    let i = y * self.size + x;
                    for c in 0..3 {
                        self.planes[c][i] = (1.0 - cover) * self.planes[c][i] + cover * color[c];
                    }
                }
            }
        }
    }

    pub fn add_noise(&mut self, sigma: f64, rng: &mut impl Rng) {
        if sigma == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for plane in &mut self.planes {
            for v in plane.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }

    /// Clamps to [0, 1] and snaps to the 8-bit grid used on disk.
    pub fn into_tensor(self) -> Tensor<f32> {
        let data = self
            .planes
            .iter()
            .flatten()
            .map(|&v| f32::from(crate::ppm::quantize(v as f32)) / 255.0)
            .collect();
        Tensor::new(vec![3, self.size, self.size], data).expect("canvas shape")
    }
}
