//! Simulated transmission channel: relative-norm AWGN and speckle noise on
//! the container waveform, plus circular temporal misalignment.
//!
//! sigma is the noise-to-signal L2 ratio: the drawn perturbation is rescaled
//! so that ||perturbation||_2 = sigma * ||c||_2. For AWGN the perturbation is
//! additive; for speckle it is c .* m (signal-proportional).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use wavestamp_tensor::{ops, Tape, Tensor};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Awgn,
    Speckle,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Awgn => write!(f, "awgn"),
            NoiseKind::Speckle => write!(f, "speckle"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f32,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> NoiseSpec {
        NoiseSpec { kind: NoiseKind::None, sigma: 0.0, seed: 0 }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, NoiseKind::None) || self.sigma == 0.0
    }

    /// Same noise shape, fresh seed (training redraws per iteration).
    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        NoiseSpec { seed, ..*self }
    }
}

/// The drawn perturbation, before it is applied to the signal.
enum Perturbation {
    Additive(Vec<f32>),
    /// Multiplicative factor (1 + m) per sample.
    Multiplicative(Vec<f32>),
}

fn draw(c: &[f32], spec: &NoiseSpec) -> Result<Option<Perturbation>> {
    for &v in c {
        if !v.is_finite() {
            return Err(Error::Numeric("channel input contains non-finite samples".into()));
        }
    }
    if spec.is_identity() {
        return Ok(None);
    }
    if spec.sigma < 0.0 {
        return Err(Error::Config("noise sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g: Vec<f64> = (0..c.len()).map(|_| rng.sample(StandardNormal)).collect();
    let c_norm: f64 = c.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    match spec.kind {
        NoiseKind::Awgn => {
            let g_norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let scale = spec.sigma as f64 * c_norm / g_norm;
            Ok(Some(Perturbation::Additive(
                g.iter().map(|&v| (v * scale) as f32).collect(),
            )))
        }
        NoiseKind::Speckle => {
            let cm_norm: f64 = c
                .iter()
                .zip(&g)
                .map(|(&cv, &gv)| {
                    let p = cv as f64 * gv;
                    p * p
                })
                .sum::<f64>()
                .sqrt()
                .max(1e-300);
            let scale = spec.sigma as f64 * c_norm / cm_norm;
            Ok(Some(Perturbation::Multiplicative(
                g.iter().map(|&v| (1.0 + v * scale) as f32).collect(),
            )))
        }
        NoiseKind::None => unreachable!(),
    }
}

/// Apply the channel to a plain waveform. sigma = 0 or kind = none returns
/// the input bitwise.
pub fn apply_noise(c: &Waveform, spec: &NoiseSpec) -> Result<Waveform> {
    match draw(&c.samples, spec)? {
        None => Ok(c.clone()),
        Some(Perturbation::Additive(n)) => Ok(Waveform::new(
            c.samples.iter().zip(&n).map(|(a, b)| a + b).collect(),
            c.sample_rate,
        )),
        Some(Perturbation::Multiplicative(m)) => Ok(Waveform::new(
            c.samples.iter().zip(&m).map(|(a, b)| a * b).collect(),
            c.sample_rate,
        )),
    }
}

/// Channel as a tape op for train-time injection. The draw (and its norm
/// scaling) is detached; the gradient sees c + const or c .* const.
pub fn apply_noise_op(tape: &Tape, c: &Tensor, spec: &NoiseSpec) -> Result<Tensor> {
    let perturbation = draw(&c.data(), spec)?;
    match perturbation {
        None => Ok(c.clone()),
        Some(Perturbation::Additive(n)) => Ok(ops::add_const(tape, c, &n)?),
        Some(Perturbation::Multiplicative(m)) => Ok(ops::mul_const(tape, c, &m)?),
    }
}

/// Circular shift by `offset` samples; positive offsets model a capture that
/// started late.
pub fn misalign(c: &Waveform, offset: isize) -> Result<Waveform> {
    let len = c.len() as isize;
    if offset.abs() >= len {
        return Err(Error::Dimension(format!(
            "misalign offset {offset} out of range for {len} samples"
        )));
    }
    let shift = offset.rem_euclid(len) as usize;
    let mut samples = Vec::with_capacity(c.len());
    samples.extend_from_slice(&c.samples[c.len() - shift..]);
    samples.extend_from_slice(&c.samples[..c.len() - shift]);
    Ok(Waveform::new(samples, c.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_wave(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-0.8..0.8)).collect(), 16_000)
    }

    fn rel_norm(c: &Waveform, out: &Waveform) -> f64 {
        let d: f64 = c
            .samples
            .iter()
            .zip(&out.samples)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let n: f64 = c.samples.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        d / n
    }

    #[test]
    fn sigma_zero_is_bitwise_identity() {
        let w = test_wave(500, 1);
        for kind in [NoiseKind::None, NoiseKind::Awgn, NoiseKind::Speckle] {
            let spec = NoiseSpec { kind, sigma: 0.0, seed: 3 };
            let out = apply_noise(&w, &spec).unwrap();
            assert!(w
                .samples
                .iter()
                .zip(&out.samples)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn relative_norm_law_holds_for_both_kinds() {
        let w = test_wave(4000, 2);
        for kind in [NoiseKind::Awgn, NoiseKind::Speckle] {
            for sigma in [0.1f32, 0.5, 0.9] {
                let spec = NoiseSpec { kind, sigma, seed: 9 };
                let out = apply_noise(&w, &spec).unwrap();
                let r = rel_norm(&w, &out);
                assert!(
                    (r - sigma as f64).abs() < 1e-6,
                    "{kind} sigma {sigma}: measured {r}"
                );
            }
        }
    }

    #[test]
    fn seeding_is_deterministic_and_seed_sensitive() {
        let w = test_wave(300, 3);
        let a = apply_noise(&w, &NoiseSpec { kind: NoiseKind::Awgn, sigma: 0.3, seed: 5 }).unwrap();
        let b = apply_noise(&w, &NoiseSpec { kind: NoiseKind::Awgn, sigma: 0.3, seed: 5 }).unwrap();
        let c = apply_noise(&w, &NoiseSpec { kind: NoiseKind::Awgn, sigma: 0.3, seed: 6 }).unwrap();
        assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.samples.iter().zip(&c.samples).any(|(x, y)| x != y));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let w = Waveform::new(vec![0.0, f32::NAN], 8_000);
        let spec = NoiseSpec { kind: NoiseKind::Awgn, sigma: 0.1, seed: 1 };
        assert!(matches!(apply_noise(&w, &spec), Err(Error::Numeric(_))));
    }

    #[test]
    fn misalign_is_invertible_and_bounded() {
        let w = test_wave(64, 4);
        assert_eq!(misalign(&w, 0).unwrap().samples, w.samples);
        let fwd = misalign(&w, 13).unwrap();
        let back = misalign(&fwd, -13).unwrap();
        assert_eq!(back.samples, w.samples);
        assert_eq!(fwd.samples[13], w.samples[0]);
        assert!(misalign(&w, 64).is_err());
        assert!(misalign(&w, -64).is_err());
    }

    #[test]
    fn noise_op_matches_pure_channel() {
        let w = test_wave(600, 7);
        for kind in [NoiseKind::Awgn, NoiseKind::Speckle] {
            let spec = NoiseSpec { kind, sigma: 0.4, seed: 21 };
            let pure = apply_noise(&w, &spec).unwrap();
            let tape = Tape::new();
            let t = Tensor::from_vec(&[w.len()], w.samples.clone()).unwrap();
            let out = apply_noise_op(&tape, &t, &spec).unwrap();
            let ov = out.to_vec();
            for (a, b) in pure.samples.iter().zip(&ov) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }
}
