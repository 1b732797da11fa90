//! The Faddeeva function `w(z) = exp(-z^2) erfc(-iz)` and its derivative.
//!
//! Upper half-plane values come from Weideman's rational approximation with
//! 40 terms for `|z| < 8` and from the Laplace continued fraction beyond
//! that radius. The lower half-plane is reached through the reflection
//! `w(z) = 2 exp(-z^2) - w(-z)`, which overflows once `Re(-z^2)` exceeds the
//! exponent range of `f64`; that case is reported instead of returned.

use num_complex::Complex64;
use thiserror::Error;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Largest argument accepted by `exp` before the result stops being finite.
const EXP_LIMIT: f64 = 709.0;

/// Beyond this radius the continued fraction converges to round-off in
/// [`CF_TERMS`] terms.
const CF_RADIUS: f64 = 8.0;
const CF_TERMS: usize = 20;

const WEIDEMAN_L: f64 = 5.318_295_896_944_988_6;

/// Polynomial coefficients in `Z = (L + iz) / (L - iz)`, highest degree first.
const WEIDEMAN_COEFFS: [f64; 40] = [
    -1.899_694_947_394_927_09e-15,
    1.128_073_562_364_402_06e-15,
    1.135_768_719_899_924_15e-14,
    -5.409_310_282_882_142_25e-15,
    -7.074_086_260_286_855_01e-14,
    1.372_562_058_671_550_02e-14,
    4.532_966_678_260_672_69e-13,
    1.203_145_821_938_798_87e-13,
    -2.907_688_342_182_866_91e-12,
    -2.727_602_315_820_045_22e-12,
    1.771_449_521_401_119_21e-11,
    3.472_726_709_304_550_01e-11,
    -9.055_124_450_928_292_25e-11,
    -3.563_233_986_597_653_32e-10,
    2.108_600_634_706_651_74e-10,
    3.017_780_540_009_070_68e-09,
    3.249_746_518_043_697_25e-09,
    -1.831_561_678_304_046_18e-08,
    -6.351_773_485_044_290_47e-08,
    1.419_864_239_993_567_39e-08,
    5.912_136_951_899_494_36e-07,
    1.483_566_113_220_078_08e-06,
    -1.066_013_898_494_714_31e-06,
    -1.800_744_714_475_095_62e-05,
    -5.591_309_264_248_318_09e-05,
    -3.939_363_145_489_568_99e-05,
    4.398_070_159_869_668_09e-04,
    2.705_405_633_073_791_44e-03,
    1.004_818_624_278_342_42e-02,
    2.920_291_647_124_186_73e-02,
    7.182_361_779_074_336_59e-02,
    1.550_426_380_247_949_54e-01,
    2.998_943_799_615_006_46e-01,
    5.266_528_988_277_086_04e-01,
    8.472_174_576_593_818_34e-01,
    1.256_381_567_576_513_31e+00,
    1.725_383_084_817_977_86e+00,
    2.201_513_794_878_311_89e+00,
    2.616_054_152_761_860_15e+00,
    2.899_624_509_389_705_28e+00,
];

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SpecFunError {
    #[error("exp(-z^2) overflows at z = {re} + {im}i")]
    Overflow { re: f64, im: f64 },
    #[error("non-finite argument {re} + {im}i")]
    NonFinite { re: f64, im: f64 },
}

/// `w(z) = exp(-z^2) erfc(-iz)`.
pub fn faddeeva_w(z: Complex64) -> Result<Complex64, SpecFunError> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(SpecFunError::NonFinite { re: z.re, im: z.im });
    }
    if z.im >= 0.0 {
        return Ok(w_upper(z));
    }
    let e = exp_neg_sq(z)?;
    Ok(2.0 * e - w_upper(-z))
}

/// `dw/dz = -2 z w(z) + 2i / sqrt(pi)`.
pub fn faddeeva_w_prime(z: Complex64) -> Result<Complex64, SpecFunError> {
    let w = faddeeva_w(z)?;
    Ok(-2.0 * z * w + Complex64::new(0.0, FRAC_2_SQRT_PI))
}

/// `exp(-s) w(z)` for real `s`, with the factor folded into the exponent of
/// the reflection term so that it cannot overflow when the product is finite.
pub fn faddeeva_w_scaled(z: Complex64, s: f64) -> Result<Complex64, SpecFunError> {
    if !(z.re.is_finite() && z.im.is_finite() && s.is_finite()) {
        return Err(SpecFunError::NonFinite { re: z.re, im: z.im });
    }
    let f = (-s).exp();
    if z.im >= 0.0 {
        return Ok(f * w_upper(z));
    }
    let (x, y) = (z.re, z.im);
    let re = (y - x) * (y + x) - s;
    if re > EXP_LIMIT {
        return Err(SpecFunError::Overflow { re: x, im: y });
    }
    let e = Complex64::from_polar(re.exp(), -2.0 * x * y);
    Ok(2.0 * e - f * w_upper(-z))
}

/// `exp(-s) w'(z)`; companion of [`faddeeva_w_scaled`].
pub fn faddeeva_w_prime_scaled(z: Complex64, s: f64) -> Result<Complex64, SpecFunError> {
    let w = faddeeva_w_scaled(z, s)?;
    Ok(-2.0 * z * w + Complex64::new(0.0, FRAC_2_SQRT_PI * (-s).exp()))
}

/// `exp(-z^2)`, with `-z^2` formed as `(y - x)(y + x) - 2ixy` to avoid the
/// cancellation in `y^2 - x^2`.
pub fn exp_neg_sq(z: Complex64) -> Result<Complex64, SpecFunError> {
    let (x, y) = (z.re, z.im);
    let re = (y - x) * (y + x);
    if re > EXP_LIMIT {
        return Err(SpecFunError::Overflow { re: x, im: y });
    }
    let im = -2.0 * x * y;
    Ok(Complex64::from_polar(re.exp(), im))
}

fn w_upper(z: Complex64) -> Complex64 {
    if z.norm() >= CF_RADIUS {
        continued_fraction(z)
    } else {
        weideman(z)
    }
}

fn weideman(z: Complex64) -> Complex64 {
    let iz = Complex64::new(-z.im, z.re);
    let denom = WEIDEMAN_L - iz;
    let zz = (WEIDEMAN_L + iz) / denom;
    let p = WEIDEMAN_COEFFS
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * zz + a);
    2.0 * p / (denom * denom) + FRAC_1_SQRT_PI / denom
}

// w(z) = (i/sqrt(pi)) / (z - (1/2) / (z - 1 / (z - (3/2) / (z - ...))))
fn continued_fraction(z: Complex64) -> Complex64 {
    let mut r = Complex64::new(0.0, 0.0);
    for k in (1..=CF_TERMS).rev() {
        r = (0.5 * k as f64) / (z - r);
    }
    Complex64::new(0.0, FRAC_1_SQRT_PI) / (z - r)
}
