//! Thin wrappers over `libm` so the crate stays `no_std`.

pub(crate) const LN_2: f64 = core::f64::consts::LN_2;

#[inline]
pub fn exp2(x: f64) -> f64 {
    libm::exp2(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// Euclidean norm of a slice.
pub fn norm2(xs: &[f64]) -> f64 {
    sqrt(xs.iter().map(|x| x * x).sum())
}

/// Euclidean norm of the elementwise difference.
pub fn diff_norm2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

#[inline]
pub fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}
