use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{ComplexTensor, RealTensor, C64};
use crate::Grain;

/// `K` plaintext slices and `T` complex noise blocks of one client's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub grain: Grain,
    pub slices: Vec<RealTensor>,
    pub noise: Vec<ComplexTensor>,
}

impl SplitBundle {
    pub fn k(&self) -> usize {
        self.slices.len()
    }

    pub fn t(&self) -> usize {
        self.noise.len()
    }

    /// `(Ω, D)` of every block.
    pub fn block_shape(&self) -> (usize, usize) {
        self.slices.first().map(|s| s.dim()).unwrap_or((0, 0))
    }
}

/// Splits `logits` into `k` slices.
///
/// Class grain requires a square `D x D` matrix and splits additively: `k-1`
/// slices uniform in `[-s, s]` with `s = max|logits|`, the last one the
/// residual. With `quantum = Some(q)` the random slices are drawn on the
/// `10^-q` grid and the residual is formed in integer grid units, so a
/// quantized input yields quantized slices.
///
/// Sample grain cuts the rows into `k` consecutive blocks.
pub fn split<R: Rng + ?Sized>(
    logits: &RealTensor,
    k: usize,
    grain: Grain,
    quantum: Option<u32>,
    rng: &mut R,
) -> Result<SplitBundle> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let (rows, cols) = logits.dim();
    let slices = match grain {
        Grain::Class => {
            if rows != cols {
                return Err(Error::ShapeMismatch { expected: (cols, cols), found: (rows, cols) });
            }
            additive_split(logits, k, quantum, rng)
        }
        Grain::Sample => {
            if rows % k != 0 {
                return Err(Error::IndivisibleO { rows, k });
            }
            let block = rows / k;
            (0..k).map(|i| logits.slice(s![i * block..(i + 1) * block, ..]).to_owned()).collect()
        }
    };
    Ok(SplitBundle { grain, slices, noise: Vec::new() })
}

fn additive_split<R: Rng + ?Sized>(
    logits: &RealTensor,
    k: usize,
    quantum: Option<u32>,
    rng: &mut R,
) -> Vec<RealTensor> {
    let bound = logits.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    match quantum {
        None => {
            let mut slices: Vec<RealTensor> = (1..k)
                .map(|_| {
                    Array2::from_shape_simple_fn(logits.dim(), || {
                        if bound == 0.0 {
                            0.0
                        } else {
                            rng.random_range(-bound..=bound)
                        }
                    })
                })
                .collect();
            let mut residual = logits.clone();
            for s in &slices {
                residual -= s;
            }
            slices.push(residual);
            slices
        }
        Some(q) => {
            let scale = 10f64.powi(q as i32);
            let units_bound = (bound * scale).round() as i64;
            let mut residual = logits.mapv(|v| (v * scale).round() as i64);
            let mut slices = Vec::with_capacity(k);
            for _ in 1..k {
                let units = Array2::from_shape_simple_fn(logits.dim(), || rng.random_range(-units_bound..=units_bound));
                residual -= &units;
                slices.push(units.mapv(|u| u as f64 / scale));
            }
            slices.push(residual.mapv(|u| u as f64 / scale));
            slices
        }
    }
}

/// Privacy noise parameters: `T` blocks whose components are Gaussian with
/// standard deviation `σ/√T`, truncated to `±θσ/√T`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseParams {
    pub t: usize,
    pub sigma: f64,
    pub theta: f64,
}

impl NoiseParams {
    /// Largest magnitude any noise component can take.
    pub fn bound(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            self.theta * self.sigma / (self.t as f64).sqrt()
        }
    }
}

/// Appends `T` truncated complex Gaussian noise blocks. Out-of-range
/// components are resampled, which keeps the noise zero mean.
pub fn blind<R: Rng + ?Sized>(bundle: &SplitBundle, params: NoiseParams, rng: &mut R) -> Result<SplitBundle> {
    let mut out = bundle.clone();
    if params.t == 0 {
        return Ok(out);
    }
    if !(params.sigma > 0.0 && params.theta > 0.0) {
        return Err(Error::InvalidParameter("sigma and theta must be positive".into()));
    }
    let std = params.sigma / (params.t as f64).sqrt();
    let bound = params.bound();
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut component = || loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= bound {
            break v;
        }
    };
    let shape = bundle.block_shape();
    for _ in 0..params.t {
        out.noise.push(Array2::from_shape_simple_fn(shape, || {
            let re = component();
            C64::new(re, component())
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn class_split_sums_to_input() {
        let logits = array![[2.0, 4.0], [6.0, 8.0]];
        let b = split(&logits, 2, Grain::Class, None, &mut rng()).unwrap();
        assert_eq!(b.k(), 2);
        let sum = &b.slices[0] + &b.slices[1];
        for (a, e) in sum.iter().zip(&logits) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_ne!(b.slices[0], logits);
    }

    #[test]
    fn quantized_class_split_stays_on_grid() {
        let logits = array![[1.234, -0.5], [0.0, 19.999]];
        let b = split(&logits, 3, Grain::Class, Some(3), &mut rng()).unwrap();
        let mut total = Array2::<i64>::zeros((2, 2));
        for s in &b.slices {
            for v in s {
                let units = v * 1000.0;
                assert!((units - units.round()).abs() < 1e-9);
            }
            total += &s.mapv(|v| (v * 1000.0).round() as i64);
        }
        assert_eq!(total, logits.mapv(|v| (v * 1000.0).round() as i64));
    }

    #[test]
    fn sample_split_keeps_block_order() {
        let logits = array![[1.0, 1.5], [2.0, 2.5], [3.0, 3.5], [4.0, 4.5]];
        let b = split(&logits, 2, Grain::Sample, None, &mut rng()).unwrap();
        assert_eq!(b.slices[0], array![[1.0, 1.5], [2.0, 2.5]]);
        assert_eq!(b.slices[1], array![[3.0, 3.5], [4.0, 4.5]]);
    }

    #[test]
    fn single_slice_is_identity() {
        let logits = array![[2.0, 4.0], [6.0, 8.0]];
        let b = split(&logits, 1, Grain::Class, None, &mut rng()).unwrap();
        assert_eq!(b.slices, vec![logits]);
    }

    #[test]
    fn split_errors() {
        let rows = RealTensor::zeros((5, 2));
        assert_eq!(
            split(&rows, 2, Grain::Sample, None, &mut rng()).unwrap_err(),
            Error::IndivisibleO { rows: 5, k: 2 }
        );
        assert!(matches!(split(&rows, 1, Grain::Class, None, &mut rng()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn no_noise_leaves_bundle_unchanged() {
        let b = split(&array![[1.0]], 1, Grain::Class, None, &mut rng()).unwrap();
        let params = NoiseParams { t: 0, sigma: 1e3, theta: 6.0 };
        assert_eq!(blind(&b, params, &mut rng()).unwrap(), b);
    }

    #[test]
    fn noise_respects_truncation_bound() {
        let b = split(&RealTensor::zeros((6, 6)), 2, Grain::Class, None, &mut rng()).unwrap();
        let params = NoiseParams { t: 4, sigma: 1e3, theta: 6.0 };
        assert_eq!(params.bound(), 3000.0);
        let blinded = blind(&b, params, &mut rng()).unwrap();
        assert_eq!(blinded.t(), 4);
        for block in &blinded.noise {
            for z in block {
                assert!(z.re.abs() <= 3000.0 && z.im.abs() <= 3000.0);
            }
        }
        // theta = 1 exercises the rejection loop heavily.
        let tight = NoiseParams { t: 1, sigma: 1.0, theta: 1.0 };
        for z in &blind(&b, tight, &mut rng()).unwrap().noise[0] {
            assert!(z.re.abs() <= 1.0 && z.im.abs() <= 1.0);
        }
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let b = split(&RealTensor::zeros((3, 3)), 1, Grain::Class, None, &mut rng()).unwrap();
        let params = NoiseParams { t: 2, sigma: 10.0, theta: 6.0 };
        let x = blind(&b, params, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let y = blind(&b, params, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let bits =
            |b: &SplitBundle| b.noise.iter().flatten().map(|z| (z.re.to_bits(), z.im.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&x), bits(&y));
    }
}
