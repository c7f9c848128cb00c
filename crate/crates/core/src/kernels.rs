//! Hot loops: the GEMM kernel and a slice-wise sine/cosine.
//!
//! Both kernels are single-threaded with a fixed evaluation order, so a
//! given build produces bit-identical results for identical inputs.

#![allow(clippy::excessive_precision)]

use crate::tensor::ValueGrid;

/// `c = op(a) * op(b) + beta * c`, where `op` optionally transposes.
///
/// Panics if the operand shapes do not conform; callers validate shapes and
/// report them as [`crate::TensorError`] first.
pub fn gemm(a: &ValueGrid, trans_a: bool, b: &ValueGrid, trans_b: bool, c: &mut ValueGrid, beta: f64) {
    let (m, k, rsa, csa) = if trans_a {
        (a.cols(), a.rows(), 1, a.cols() as isize)
    } else {
        (a.rows(), a.cols(), a.cols() as isize, 1)
    };
    let (kb, n, rsb, csb) = if trans_b {
        (b.cols(), b.rows(), 1, b.cols() as isize)
    } else {
        (b.rows(), b.cols(), b.cols() as isize, 1)
    };
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!(c.shape(), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_in_place(beta);
        return;
    }
    let ldc = n as isize;
    // SAFETY: the strides above describe exactly the row-major storage of
    // `a`, `b` and `c`, whose lengths were checked against (m, k, n).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            beta,
            c.data_mut().as_mut_ptr(),
            ldc,
            1,
        );
    }
}

// Cody-Waite split of pi/2 into 33-bit pieces; n * PIO2_1 and n * PIO2_2
// are exact for |n| < 2^20.
const INV_PIO2: f64 = std::f64::consts::FRAC_2_PI;
const PIO2_1: f64 = 1.570_796_326_734_125_614_17e+00;
const PIO2_2: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_3: f64 = 2.022_266_248_711_166_455_80e-21;
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
/// Beyond this magnitude the three-term reduction loses accuracy.
const REDUCTION_LIMIT: f64 = 823_549.0;

const S1: f64 = -1.666_666_666_666_663_243_48e-01;
const S2: f64 = 8.333_333_333_322_489_461_24e-03;
const S3: f64 = -1.984_126_982_985_794_931_34e-04;
const S4: f64 = 2.755_731_370_707_006_767_89e-06;
const S5: f64 = -2.505_076_025_340_686_341_95e-08;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-02;
const C2: f64 = -1.388_888_888_887_410_957_49e-03;
const C3: f64 = 2.480_158_728_947_672_941_78e-05;
const C4: f64 = -2.755_731_435_139_066_330_35e-07;
const C5: f64 = 2.087_572_321_298_174_827_90e-09;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

#[inline(always)]
fn sin_cos_reduced(x: f64) -> (f64, f64) {
    let shifted = x * INV_PIO2 + ROUND_MAGIC;
    let quadrant = shifted.to_bits() & 3;
    let n = shifted - ROUND_MAGIC;
    let r = ((x - n * PIO2_1) - n * PIO2_2) - n * PIO2_3;

    let z = r * r;
    let sr = S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)));
    let s = r + z * r * (S1 + z * sr);
    let cr = z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let hz = 0.5 * z;
    let w = 1.0 - hz;
    let c = w + (((1.0 - w) - hz) + z * cr);

    // quadrant 0: ( s,  c)   1: ( c, -s)   2: (-s, -c)   3: (-c,  s)
    let swap = quadrant & 1 == 1;
    let (s0, c0) = if swap { (c, s) } else { (s, c) };
    let sin_sign = (quadrant & 2) << 62;
    let cos_sign = ((quadrant + 1) & 2) << 62;
    (
        f64::from_bits(s0.to_bits() ^ sin_sign),
        f64::from_bits(c0.to_bits() ^ cos_sign),
    )
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn in_range(x: &[f64], scale: f64) -> bool {
    // `!(a <= limit)` also catches NaN; a plain fold keeps this vectorizable.
    !x.iter().fold(false, |bad, &v| bad | !((scale * v).abs() <= REDUCTION_LIMIT))
}

#[inline(always)]
fn sin_cos_body(x: &[f64], scale: f64, sin_out: &mut [f64], cos_out: &mut [f64]) {
    if in_range(x, scale) {
        for ((&v, s), c) in x.iter().zip(sin_out.iter_mut()).zip(cos_out.iter_mut()) {
            (*s, *c) = sin_cos_reduced(scale * v);
        }
    } else {
        for ((&v, s), c) in x.iter().zip(sin_out.iter_mut()).zip(cos_out.iter_mut()) {
            (*s, *c) = (scale * v).sin_cos();
        }
    }
}

#[inline(always)]
fn sin_body(x: &[f64], scale: f64, out: &mut [f64]) {
    if in_range(x, scale) {
        for (&v, o) in x.iter().zip(out.iter_mut()) {
            *o = sin_cos_reduced(scale * v).0;
        }
    } else {
        for (&v, o) in x.iter().zip(out.iter_mut()) {
            *o = (scale * v).sin();
        }
    }
}

// Wider vector units only change how many lanes run at once. Rust never
// contracts a*b+c into an FMA on its own, so every variant rounds alike.
#[cfg(target_arch = "x86_64")]
mod wide {
    #[target_feature(enable = "avx512f,avx512dq,avx512vl")]
    pub fn sin_cos_avx512(x: &[f64], scale: f64, s: &mut [f64], c: &mut [f64]) {
        super::sin_cos_body(x, scale, s, c)
    }

    #[target_feature(enable = "avx2")]
    pub fn sin_cos_avx2(x: &[f64], scale: f64, s: &mut [f64], c: &mut [f64]) {
        super::sin_cos_body(x, scale, s, c)
    }

    #[target_feature(enable = "avx512f,avx512dq,avx512vl")]
    pub fn sin_avx512(x: &[f64], scale: f64, out: &mut [f64]) {
        super::sin_body(x, scale, out)
    }

    #[target_feature(enable = "avx2")]
    pub fn sin_avx2(x: &[f64], scale: f64, out: &mut [f64]) {
        super::sin_body(x, scale, out)
    }

    pub fn has_avx512() -> bool {
        is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("avx512dq") && is_x86_feature_detected!("avx512vl")
    }

    pub fn has_avx2() -> bool {
        is_x86_feature_detected!("avx2")
    }
}

/// Writes `sin(scale * x)` and `cos(scale * x)` for every element of `x`.
///
/// Accurate to about one ulp; arguments whose magnitude exceeds the
/// reduction range (or are not finite) fall back to the standard library for
/// the whole slice so that results never depend on position.
pub fn sin_cos_scaled(x: &[f64], scale: f64, sin_out: &mut [f64], cos_out: &mut [f64]) {
    assert!(x.len() == sin_out.len() && x.len() == cos_out.len());
    #[cfg(target_arch = "x86_64")]
    {
        if wide::has_avx512() {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { wide::sin_cos_avx512(x, scale, sin_out, cos_out) };
        }
        if wide::has_avx2() {
            // SAFETY: as above.
            return unsafe { wide::sin_cos_avx2(x, scale, sin_out, cos_out) };
        }
    }
    sin_cos_body(x, scale, sin_out, cos_out)
}

/// Writes `sin(scale * x)` only.
pub fn sin_scaled(x: &[f64], scale: f64, out: &mut [f64]) {
    assert_eq!(x.len(), out.len());
    #[cfg(target_arch = "x86_64")]
    {
        if wide::has_avx512() {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { wide::sin_avx512(x, scale, out) };
        }
        if wide::has_avx2() {
            // SAFETY: as above.
            return unsafe { wide::sin_avx2(x, scale, out) };
        }
    }
    sin_body(x, scale, out)
}
