//! Procedural RGB test images, so fits can run without external data.

use std::f64::consts::TAU;

use crate::signal::image::ImageSignal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestCard {
    /// Constant mid gray.
    Gray,
    /// Black/white squares of the given side in pixels.
    Checkerboard { cell: usize },
    /// Sinusoidal grating with the given number of cycles across the width,
    /// phase-shifted per channel.
    Grating { cycles: f64 },
    /// Radial chirp; spatial frequency grows with distance from the centre.
    ZonePlate,
}

impl std::str::FromStr for TestCard {
    type Err = String;

    /// `gray`, `checker[:cell]`, `grating[:cycles]`, `zoneplate`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(n, a)| (n, Some(a)));
        let bad = |e: String| format!("bad test card `{s}`: {e}");
        match name {
            "gray" => Ok(TestCard::Gray),
            "checker" | "checkerboard" => {
                let cell = arg.map_or(Ok(8), |a| a.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string())))?;
                if cell == 0 {
                    return Err(bad("cell must be positive".into()));
                }
                Ok(TestCard::Checkerboard { cell })
            }
            "grating" => {
                let cycles = arg.map_or(Ok(4.0), |a| a.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string())))?;
                Ok(TestCard::Grating { cycles })
            }
            "zoneplate" => Ok(TestCard::ZonePlate),
            _ => Err(bad("unknown name".into())),
        }
    }
}

impl TestCard {
    pub fn render(&self, width: usize, height: usize) -> ImageSignal {
        let mut px = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let u = x as f64 / width as f64;
                let v = y as f64 / height as f64;
                for c in 0..3 {
                    let val = match *self {
                        TestCard::Gray => 0.5,
                        TestCard::Checkerboard { cell } => {
                            if (x / cell + y / cell) % 2 == 0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        TestCard::Grating { cycles } => 0.5 + 0.5 * (TAU * cycles * u + c as f64 * TAU / 3.0).sin(),
                        TestCard::ZonePlate => {
                            let r2 = (u - 0.5).powi(2) + (v - 0.5).powi(2);
                            0.5 + 0.5 * (TAU * 40.0 * r2 + c as f64).cos()
                        }
                    };
                    px.push(val);
                }
            }
        }
        ImageSignal::new(width, height, 3, px).expect("test cards stay in [0, 1]")
    }
}
