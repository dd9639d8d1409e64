//! Gamma correction of 8-bit grey-scale images: `s(G) = 255 (G/255)^(1/gamma(G))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GammaMap {
    Constant { gamma: f64 },
    /// One gamma per grey level 0..=255.
    Table { gammas: Vec<f64> },
}

impl Default for GammaMap {
    fn default() -> Self {
        GammaMap::Constant { gamma: 1.0 }
    }
}

impl GammaMap {
    pub fn constant(gamma: f64) -> Result<Self> {
        let m = GammaMap::Constant { gamma };
        m.validate()?;
        Ok(m)
    }

    pub fn table(gammas: Vec<f64>) -> Result<Self> {
        let m = GammaMap::Table { gammas };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |g: f64| !(g > 0.0) || !g.is_finite();
        match self {
            GammaMap::Constant { gamma } if bad(*gamma) => {
                Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")))
            }
            GammaMap::Table { gammas } if gammas.len() != 256 => Err(Error::InvalidParameter(format!(
                "gamma table needs 256 entries, got {}",
                gammas.len()
            ))),
            GammaMap::Table { gammas } => match gammas.iter().position(|&g| bad(g)) {
                Some(g) => Err(Error::InvalidParameter(format!(
                    "gamma for grey level {g} must be positive, got {}",
                    gammas[g]
                ))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    pub fn gamma_at(&self, level: u8) -> f64 {
        match self {
            GammaMap::Constant { gamma } => *gamma,
            GammaMap::Table { gammas } => gammas[level as usize],
        }
    }

    pub fn correct_level(&self, level: u8) -> f64 {
        255.0 * (level as f64 / 255.0).powf(1.0 / self.gamma_at(level))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

/// Applies the map to every pixel; the output stays in `[0, 255]`.
pub fn gamma_correct(image: &GrayImage, map: &GammaMap) -> Result<Vec<f64>> {
    map.validate()?;
    let lut: Vec<f64> = (0..=255u8).map(|g| map.correct_level(g)).collect();
    Ok(image.pixels.iter().map(|&g| lut[g as usize]).collect())
}

/// Decodes a binary (P5) or ASCII (P2) PGM image.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::Image(e.to_string()))?;
    let luma = match img {
        image::DynamicImage::ImageLuma8(l) => l,
        other => return Err(Error::Image(format!("expected 8-bit grey image, got {:?}", other.color()))),
    };
    Ok(GrayImage {
        width: luma.width(),
        height: luma.height(),
        pixels: luma.into_raw(),
    })
}

/// Encodes as binary PGM (P5, maxval 255).
pub fn write_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}
