//! Statistical validators for uniformity and avalanche, and the weighted
//! score used to rank candidates.

use crate::bits::mask;
use crate::error::{Error, Result};
use crate::remap::LayeredFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest output space evaluated with one bin per value.
pub const MAX_BIN_BITS: u32 = 24;

/// Anything that maps fixed-width inputs to fixed-width outputs.
pub trait BitFunction: Sync {
    fn input_width(&self) -> u32;
    fn output_width(&self) -> u32;
    fn eval(&self, x: u128) -> u128;
}

impl BitFunction for LayeredFunction {
    fn input_width(&self) -> u32 {
        LayeredFunction::input_width(self)
    }
    fn output_width(&self) -> u32 {
        LayeredFunction::output_width(self)
    }
    fn eval(&self, x: u128) -> u128 {
        LayeredFunction::eval(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Worst per-field coefficient of variation of bin counts.
    pub uniformity_cv: f64,
    /// Number of bins of the field that produced `uniformity_cv`.
    pub uniformity_bins: u64,
    pub avalanche_mean: f64,
    pub avalanche_cv: f64,
    pub per_bit_spread: f64,
    pub sample_count: u64,
}

impl QualityReport {
    /// The metrics with 0 as the optimum, in score order.
    pub fn normalized(&self) -> [f64; 4] {
        let const_cv = ((self.uniformity_bins.max(2) - 1) as f64).sqrt();
        [
            (self.avalanche_mean - 0.5).abs() * 2.0,
            self.avalanche_cv,
            self.per_bit_spread,
            self.uniformity_cv / const_cv,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvalancheStats {
    pub mean: f64,
    pub cv: f64,
    pub per_bit_spread: f64,
}

#[inline]
fn random_input(rng: &mut ChaCha8Rng, width: u32) -> u128 {
    rng.gen::<u128>() & mask(width)
}

fn cv_of(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    var.sqrt() / mean
}

/// Balls-and-bins coefficient of variation over the whole output.
pub fn eval_uniformity<F: BitFunction + ?Sized>(f: &F, samples: u64, seed: u64) -> Result<f64> {
    eval_uniformity_field(f, 0, f.output_width(), samples, seed)
}

/// Balls-and-bins CV over the output slice `[lo, lo + width)`.
pub fn eval_uniformity_field<F: BitFunction + ?Sized>(
    f: &F,
    lo: u32,
    width: u32,
    samples: u64,
    seed: u64,
) -> Result<f64> {
    if width > MAX_BIN_BITS {
        return Err(Error::Evaluation(
            "bin space too large; evaluate a truncated output slice".into(),
        ));
    }
    if lo + width > f.output_width() {
        return Err(Error::WidthMismatch { expected: f.output_width(), got: lo + width });
    }
    let mut bins = vec![0u32; 1usize << width];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_w = f.input_width();
    for _ in 0..samples {
        let y = f.eval(random_input(&mut rng, in_w));
        bins[((y >> lo) & mask(width)) as usize] += 1;
    }
    Ok(cv_of(bins.iter().map(|&c| c as f64)))
}

/// Expected CV of an ideal random function with `bins` bins and `samples`
/// balls (multinomial: sd = sqrt(N p (1-p)), mean = N p).
pub fn ideal_uniformity_cv(bins: u64, samples: u64) -> f64 {
    ((bins as f64 - 1.0) / samples as f64).sqrt()
}

pub fn eval_avalanche<F: BitFunction + ?Sized>(f: &F, samples: u64, seed: u64) -> AvalancheStats {
    let in_w = f.input_width();
    let out_w = f.output_width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_input_means = Vec::with_capacity(samples as usize);
    let mut bit_flips = vec![0u64; out_w as usize];
    let mut total = 0.0;
    for _ in 0..samples {
        let x = random_input(&mut rng, in_w);
        let base = f.eval(x);
        let mut flips = 0u32;
        for i in 0..in_w {
            let mut d = f.eval(x ^ (1u128 << i)) ^ base;
            flips += d.count_ones();
            while d != 0 {
                let j = d.trailing_zeros();
                bit_flips[j as usize] += 1;
                d &= d - 1;
            }
        }
        let m = flips as f64 / (in_w as f64 * out_w as f64);
        total += m;
        per_input_means.push(m);
    }
    let mean = if samples == 0 { 0.0 } else { total / samples as f64 };
    let denom = (samples * in_w as u64).max(1) as f64;
    let fracs = bit_flips.iter().map(|&c| c as f64 / denom);
    let spread = fracs.clone().fold(f64::MIN, f64::max) - fracs.fold(f64::MAX, f64::min);
    AvalancheStats {
        mean,
        cv: cv_of(per_input_means.iter().copied()),
        per_bit_spread: if out_w == 0 { 0.0 } else { spread },
    }
}

/// Full report: avalanche over the whole output, uniformity per field
/// (field widths in output bit order, low bits first).
pub fn evaluate<F: BitFunction + ?Sized>(
    f: &F,
    fields: &[u32],
    uniformity_samples: u64,
    avalanche_samples: u64,
    seed: u64,
) -> Result<QualityReport> {
    let av = eval_avalanche(f, avalanche_samples, seed);
    let mut worst = (0.0f64, 2u64);
    let mut lo = 0;
    for (k, &w) in fields.iter().enumerate() {
        let cv = eval_uniformity_field(f, lo, w, uniformity_samples, seed.wrapping_add(k as u64 + 1))?;
        let bins = 1u64 << w;
        // rank fields by CV relative to ideal so narrow fields are comparable
        let rel = cv / ideal_uniformity_cv(bins, uniformity_samples);
        let worst_rel = worst.0 / ideal_uniformity_cv(worst.1, uniformity_samples);
        if k == 0 || rel > worst_rel {
            worst = (cv, bins);
        }
        lo += w;
    }
    Ok(QualityReport {
        uniformity_cv: worst.0,
        uniformity_bins: worst.1,
        avalanche_mean: av.mean,
        avalanche_cv: av.cv,
        per_bit_spread: av.per_bit_spread,
        sample_count: avalanche_samples,
    })
}

pub const DEFAULT_WEIGHTS: [f64; 4] = [1.0; 4];

/// Weighted sum of normalized metrics; lower is better, 0 is ideal.
pub fn score_candidate(q: &QualityReport, weights: &[f64]) -> Result<f64> {
    if let Some(i) = weights.iter().position(|w| *w < 0.0) {
        return Err(Error::NegativeWeight(i));
    }
    let g = q.normalized();
    if weights.len() != g.len() {
        return Err(Error::Evaluation(format!(
            "expected {} weights, got {}",
            g.len(),
            weights.len()
        )));
    }
    Ok(g.iter().zip(weights).map(|(g, w)| g * w).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::remap::{Layer, Placement, Primitive};

    struct Constant;
    impl BitFunction for Constant {
        fn input_width(&self) -> u32 {
            16
        }
        fn output_width(&self) -> u32 {
            8
        }
        fn eval(&self, _: u128) -> u128 {
            0x5a
        }
    }

    fn identity(width: u32) -> LayeredFunction {
        let perm = (0..width as u16).collect();
        let layer = Layer::new(width, vec![Placement { lo: 0, prim: Primitive::pbox(perm).unwrap() }]).unwrap();
        LayeredFunction::new("id", width, vec![layer]).unwrap()
    }

    #[test]
    fn constant_function_cv() {
        let cv = eval_uniformity(&Constant, 100_000, 1).unwrap();
        assert!((cv - 255f64.sqrt()).abs() < 1e-9, "{cv}");
    }

    #[test]
    fn identity_uniformity_near_ideal() {
        let f = identity(8);
        let cv = eval_uniformity(&f, 1_000_000, 3).unwrap();
        let ideal = ideal_uniformity_cv(256, 1_000_000);
        assert!(cv < 3.0 * ideal && cv > ideal / 3.0, "{cv} vs {ideal}");
    }

    #[test]
    fn wide_output_rejected() {
        let f = identity(25);
        assert!(eval_uniformity(&f, 10, 0).is_err());
        assert!(eval_uniformity_field(&f, 0, 24, 10, 0).is_ok());
    }

    #[test]
    fn identity_avalanche() {
        let f = identity(16);
        let av = eval_avalanche(&f, 2_000, 9);
        assert!((av.mean - 0.0625).abs() < 1e-12);
        assert!(av.cv.abs() < 1e-12);
        assert!(av.per_bit_spread.abs() < 1e-12);
    }

    #[test]
    fn scores() {
        let perfect = QualityReport {
            uniformity_cv: 0.0,
            uniformity_bins: 256,
            avalanche_mean: 0.5,
            avalanche_cv: 0.0,
            per_bit_spread: 0.0,
            sample_count: 1,
        };
        assert_eq!(score_candidate(&perfect, &DEFAULT_WEIGHTS).unwrap(), 0.0);

        let f = identity(16);
        let q = evaluate(&f, &[8, 8], 100_000, 1_000, 5).unwrap();
        let s = score_candidate(&q, &DEFAULT_WEIGHTS).unwrap();
        assert!(s >= 0.875 && s < 0.875 + 0.05, "{s}");

        let worse = QualityReport {
            uniformity_cv: 0.1,
            avalanche_mean: 0.4,
            avalanche_cv: 0.2,
            per_bit_spread: 0.1,
            ..perfect
        };
        let better = QualityReport {
            uniformity_cv: 0.05,
            avalanche_mean: 0.45,
            avalanche_cv: 0.1,
            per_bit_spread: 0.05,
            ..perfect
        };
        assert!(score_candidate(&worse, &DEFAULT_WEIGHTS).unwrap() > score_candidate(&better, &DEFAULT_WEIGHTS).unwrap());
        assert_eq!(score_candidate(&perfect, &[1.0, -1.0, 1.0, 1.0]), Err(Error::NegativeWeight(1)));
        assert!(score_candidate(&perfect, &[1.0]).is_err());
    }
}
