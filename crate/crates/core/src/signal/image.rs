//! 8-bit PNG and binary PPM/PGM images as `[0, 1]` reals.

use std::io::Cursor;
use std::path::Path;

use crate::error::SignalError;
use crate::tensor::ValueGrid;

/// Row-major, channel-interleaved pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSignal {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

/// Decoded images larger than this many samples are rejected.
pub const MAX_SAMPLES: usize = 1 << 26;

impl ImageSignal {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self, SignalError> {
        if channels != 1 && channels != 3 {
            return Err(SignalError::Unsupported(format!("{channels} channels")));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| SignalError::Decode("image dimensions overflow".into()))?;
        if expected != pixels.len() {
            return Err(SignalError::Decode(format!(
                "{width}x{height}x{channels} image needs {expected} samples, got {}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(SignalError::Decode(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// `p -> p / 255`.
    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self, SignalError> {
        Self::new(width, height, channels, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Rounded 8-bit samples.
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// `channels x (width * height)` grid; column `j` is pixel `j` in
    /// row-major order.
    pub fn to_targets(&self) -> ValueGrid {
        let n = self.num_pixels();
        ValueGrid::from_fn(self.channels, n, |c, j| self.pixels[j * self.channels + c])
    }

    /// Inverse of [`ImageSignal::to_targets`]; values are clamped to `[0, 1]`.
    pub fn from_predictions(grid: &ValueGrid, width: usize, height: usize) -> Result<Self, SignalError> {
        let channels = grid.rows();
        if grid.cols() != width * height {
            return Err(SignalError::Shape {
                left: (grid.cols(), 1, channels),
                right: (width, height, channels),
            });
        }
        let mut pixels = vec![0.0; width * height * channels];
        for c in 0..channels {
            for (j, &v) in grid.row(c).iter().enumerate() {
                pixels[j * channels + c] = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            }
        }
        Self::new(width, height, channels, pixels)
    }

    /// Centered `crop_w x crop_h` window (offsets rounded down).
    pub fn center_crop(&self, crop_w: usize, crop_h: usize) -> Result<Self, SignalError> {
        if crop_w == 0 || crop_h == 0 || crop_w > self.width || crop_h > self.height {
            return Err(SignalError::Crop {
                crop_w,
                crop_h,
                width: self.width,
                height: self.height,
            });
        }
        let x0 = (self.width - crop_w) / 2;
        let y0 = (self.height - crop_h) / 2;
        let c = self.channels;
        let mut pixels = Vec::with_capacity(crop_w * crop_h * c);
        for y in y0..y0 + crop_h {
            let start = (y * self.width + x0) * c;
            pixels.extend_from_slice(&self.pixels[start..start + crop_w * c]);
        }
        Self::new(crop_w, crop_h, c, pixels)
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Decodes PNG or binary PPM/PGM bytes, sniffing the format.
pub fn decode_image(bytes: &[u8]) -> Result<ImageSignal, SignalError> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else {
        Err(SignalError::Unsupported("expected PNG or binary PPM/PGM data".into()))
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageSignal, SignalError> {
    let limits = png::Limits {
        bytes: MAX_SAMPLES * 4,
    };
    let mut decoder = png::Decoder::new_with_limits(Cursor::new(bytes), limits);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| SignalError::Decode(e.to_string()))?;
    if reader.info().bit_depth == png::BitDepth::Sixteen {
        return Err(SignalError::BitDepth(16));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| SignalError::Decode("image too large".into()))?;
    if size > MAX_SAMPLES * 4 {
        return Err(SignalError::Decode("image too large".into()));
    }
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| SignalError::Decode(e.to_string()))?;
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(SignalError::BitDepth(frame.bit_depth as u32));
    }
    let (width, height) = (frame.width as usize, frame.height as usize);
    let (stride, keep) = match frame.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(SignalError::Unsupported("unexpanded palette".into())),
    };
    let mut samples = Vec::with_capacity(width * height * keep);
    for row in buf[..frame.line_size * height].chunks_exact(frame.line_size) {
        for px in row[..width * stride].chunks_exact(stride) {
            samples.extend_from_slice(&px[..keep]);
        }
    }
    ImageSignal::from_u8(width, height, keep, &samples)
}

pub fn encode_png(img: &ImageSignal) -> Result<Vec<u8>, SignalError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(if img.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| SignalError::Decode(e.to_string()))?;
        writer
            .write_image_data(&img.to_u8())
            .map_err(|e| SignalError::Decode(e.to_string()))?;
    }
    Ok(out)
}

struct Header<'a> {
    rest: &'a [u8],
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        loop {
            match self.rest.first() {
                Some(b) if b.is_ascii_whitespace() => self.rest = &self.rest[1..],
                Some(b'#') => {
                    let end = self.rest.iter().position(|&b| b == b'\n').unwrap_or(self.rest.len());
                    self.rest = &self.rest[end..];
                }
                _ => return,
            }
        }
    }

    fn number(&mut self) -> Result<usize, SignalError> {
        self.skip_space();
        let len = self.rest.iter().take_while(|b| b.is_ascii_digit()).count();
        if len == 0 || len > 9 {
            return Err(SignalError::Decode("bad PPM header field".into()));
        }
        let text = std::str::from_utf8(&self.rest[..len]).expect("ascii digits");
        self.rest = &self.rest[len..];
        Ok(text.parse().expect("at most nine digits"))
    }
}

/// Binary PGM (`P5`, gray) or PPM (`P6`, RGB) with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<ImageSignal, SignalError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(SignalError::Unsupported("not a binary PGM/PPM file".into())),
    };
    let mut h = Header { rest: &bytes[2..] };
    let width = h.number()?;
    let height = h.number()?;
    let maxval = h.number()?;
    match maxval {
        255 => {}
        256..=65535 => return Err(SignalError::BitDepth(16)),
        other => return Err(SignalError::Unsupported(format!("maxval {other}"))),
    }
    match h.rest.first() {
        Some(b) if b.is_ascii_whitespace() => h.rest = &h.rest[1..],
        _ => return Err(SignalError::Decode("missing separator after PPM header".into())),
    }
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .filter(|&n| n <= MAX_SAMPLES)
        .ok_or_else(|| SignalError::Decode("image too large".into()))?;
    if width == 0 || height == 0 {
        return Err(SignalError::Decode("empty image".into()));
    }
    if h.rest.len() < needed {
        return Err(SignalError::Decode(format!(
            "truncated pixel data: need {needed} bytes, have {}",
            h.rest.len()
        )));
    }
    ImageSignal::from_u8(width, height, channels, &h.rest[..needed])
}

pub fn encode_ppm(img: &ImageSignal) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    out
}

fn is_ppm_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("ppm" | "pgm" | "pnm")
    )
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageSignal, SignalError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes)
}

/// Writes PNG, or PPM/PGM when the extension asks for it.
pub fn save_image(img: &ImageSignal, path: impl AsRef<Path>) -> Result<(), SignalError> {
    let path = path.as_ref();
    let bytes = if is_ppm_path(path) {
        encode_ppm(img)
    } else {
        encode_png(img)?
    };
    std::fs::write(path, bytes).map_err(|source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_extremes() {
        let img = ImageSignal::from_u8(2, 1, 1, &[255, 0]).unwrap();
        assert_eq!(img.pixels(), &[1.0, 0.0]);
    }

    #[test]
    fn ppm_with_comments() {
        let mut bytes = b"P6 # rgb\n2 1\n# max\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 128, 255]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.shape(), (2, 1, 3));
        assert_eq!(img.pixels()[4], 128.0 / 255.0);
    }

    #[test]
    fn ppm_rejections() {
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(SignalError::BitDepth(16))));
        assert!(matches!(decode_ppm(b"P6\n2 2\n255\n\0\0"), Err(SignalError::Decode(_))));
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n1 2 3"), Err(SignalError::Unsupported(_))));
        assert!(decode_ppm(b"P5\n99999 99999\n255\n").is_err());
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            enc.write_header().unwrap().write_image_data(&[0, 1]).unwrap();
        }
        assert!(matches!(decode_png(&out), Err(SignalError::BitDepth(16))));
    }

    #[test]
    fn rgba_png_drops_alpha() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            enc.write_header().unwrap().write_image_data(&[10, 20, 30, 40]).unwrap();
        }
        let img = decode_png(&out).unwrap();
        assert_eq!(img.to_u8(), vec![10, 20, 30]);
    }

    #[test]
    fn center_crop_takes_middle() {
        let img = ImageSignal::from_u8(4, 4, 1, &(0..16).collect::<Vec<u8>>()).unwrap();
        let crop = img.center_crop(2, 2).unwrap();
        assert_eq!(crop.to_u8(), vec![5, 6, 9, 10]);
        assert!(img.center_crop(5, 2).is_err());
    }

    #[test]
    fn targets_round_trip() {
        let img = ImageSignal::from_u8(3, 2, 3, &(0..18).map(|v| v * 10).collect::<Vec<u8>>()).unwrap();
        let t = img.to_targets();
        assert_eq!(t.shape(), (3, 6));
        assert_eq!(ImageSignal::from_predictions(&t, 3, 2).unwrap(), img);
    }

    proptest! {
        #[test]
        fn save_load_quantization_bound(
            (w, h, c, px) in (1usize..9, 1usize..9, prop_oneof![Just(1usize), Just(3usize)])
                .prop_flat_map(|(w, h, c)| (Just(w), Just(h), Just(c), proptest::collection::vec(0.0f64..=1.0, w * h * c)))
        ) {
            let img = ImageSignal::new(w, h, c, px).unwrap();
            for bytes in [encode_png(&img).unwrap(), encode_ppm(&img)] {
                let back = decode_image(&bytes).unwrap();
                prop_assert_eq!(back.shape(), img.shape());
                let worst = back.pixels().iter().zip(img.pixels()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                prop_assert!(worst <= 1.0 / (2.0 * 255.0) + 1e-12);
            }
        }
    }
}
