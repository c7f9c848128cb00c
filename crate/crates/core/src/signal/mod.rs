//! Image I/O, coordinate grids, PSNR and 1-D spectral analysis.

pub mod grid;
pub mod image;
pub mod metrics;
pub mod spectrum;
pub mod testcard;

pub use grid::{make_grid, CoordinateGrid};
pub use image::{decode_image, decode_png, decode_ppm, encode_png, encode_ppm, load_image, save_image, ImageSignal};
pub use metrics::{psnr, psnr_from_mse, psnr_images, psnr_values, PSNR_CAP_DB};
pub use spectrum::{fft_in_place, peak_frequencies, spectrum_1d, Spectrum};
pub use testcard::TestCard;
