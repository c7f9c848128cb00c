use crate::error::SignalError;
use crate::signal::image::ImageSignal;

/// Reported for a perfect reconstruction.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Mean squared error over all samples after clamping `pred` to `[0, 1]`.
pub fn clamped_mse(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
            (p - t) * (p - t)
        })
        .sum::<f64>()
        / n
}

/// `10 log10(1 / mse)` for a unit peak, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// PSNR of raw samples against `[0, 1]` targets.
pub fn psnr_values(pred: &[f64], target: &[f64]) -> Result<f64, SignalError> {
    if pred.len() != target.len() {
        return Err(SignalError::Shape {
            left: (pred.len(), 1, 1),
            right: (target.len(), 1, 1),
        });
    }
    Ok(psnr_from_mse(clamped_mse(pred, target)))
}

/// PSNR of channel-interleaved predictions against an image.
pub fn psnr(pred: &[f64], target: &ImageSignal) -> Result<f64, SignalError> {
    psnr_values(pred, target.pixels())
}

pub fn psnr_images(pred: &ImageSignal, target: &ImageSignal) -> Result<f64, SignalError> {
    if pred.shape() != target.shape() {
        return Err(SignalError::Shape {
            left: pred.shape(),
            right: target.shape(),
        });
    }
    psnr_values(pred.pixels(), target.pixels())
}
