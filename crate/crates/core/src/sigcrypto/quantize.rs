use crate::coding::SplitBundle;
use crate::error::{Error, Result};
use crate::numerics::RealTensor;

/// `|x|·10^q` must stay below this.
const RANGE: f64 = (1u64 << 62) as f64;

/// Preflight warns once the projected rounding error reaches this fraction
/// of the half-unit the verification check can absorb.
pub const ROUNDING_WARN_THRESHOLD: f64 = 0.25;

fn scale(q: u32) -> f64 {
    10f64.powi(q as i32)
}

fn guard(x: f64, q: u32) -> Result<f64> {
    let scaled = x * scale(q);
    if !scaled.is_finite() || scaled.abs() >= RANGE {
        return Err(Error::Overflow { value: x, digits: q });
    }
    Ok(scaled)
}

/// `⌊x·10^q⌋`.
pub fn conv(x: f64, q: u32) -> Result<i64> {
    Ok(guard(x, q)?.floor() as i64)
}

/// Every entry replaced by `conv(v, q) / 10^q`.
pub fn quantize_tensor(t: &RealTensor, q: u32) -> Result<RealTensor> {
    let s = scale(q);
    let mut out = t.clone();
    for v in out.iter_mut() {
        *v = conv(*v, q)? as f64 / s;
    }
    Ok(out)
}

/// Element sum of each plaintext slice.
pub fn digest(bundle: &SplitBundle) -> Vec<f64> {
    bundle.slices.iter().map(|s| s.sum()).collect()
}

/// Element sum of each slice in `10^-q` units. Entries are rounded to the
/// grid first, so a quantized slice gives its digest exactly.
pub fn digest_units(bundle: &SplitBundle, q: u32) -> Result<Vec<i64>> {
    bundle.slices.iter().map(|s| s.iter().try_fold(0i64, |acc, &v| Ok(acc + guard(v, q)?.round() as i64))).collect()
}

/// Projected absolute error of the verification exponent: `‖Y‖·RE·10^(2q)`.
/// Verification needs this well below one half.
pub fn rounding_margin(teacher_norm: f64, relative_error: f64, q: u32) -> f64 {
    teacher_norm * relative_error * scale(2 * q)
}
