//! The composite steganographic loss and the soft-DTW alignment term.
//!
//! Composite: beta * MAE(s, s') + (1 - beta) * MSE(C, C').
//! Total: composite + lambda * dtw_gamma(decimate(c), decimate(c')).
//!
//! soft-DTW uses the smoothed-min recursion over squared pointwise costs,
//!   R(i,j) = d(i,j) + softmin_gamma(R(i-1,j), R(i,j-1), R(i-1,j-1)),
//! with the log-sum-exp stabilized by subtracting the minimum. Gradients come
//! from the standard backward recursion over alignment expectations. The
//! value can dip below zero for near-identical sequences; that is the
//! log-sum-exp over many near-zero paths, not a bug.

use wavestamp_tensor::{ops, Tape, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub beta: f32,
    pub lambda: f32,
    pub gamma: f32,
}

impl LossWeights {
    pub fn new(beta: f32) -> Result<LossWeights> {
        let w = LossWeights { beta, lambda: 1e-4, gamma: 1.0 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::Config("gamma must be > 0".into()));
        }
        Ok(())
    }
}

/// beta * MAE(s, s_rev) + (1 - beta) * MSE(c_host, c_cont).
/// At beta = 1 this is exactly the MAE term; at beta = 0 exactly the MSE.
pub fn composite_loss(
    tape: &Tape,
    s: &Tensor,
    s_rev: &Tensor,
    c_host: &Tensor,
    c_cont: &Tensor,
    beta: f32,
) -> Result<CompositeLoss> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta {beta} outside [0, 1]")));
    }
    let image_mae = ops::mae(tape, s, s_rev)?;
    let audio_mse = ops::mse(tape, c_host, c_cont)?;
    let mae_val = image_mae.item();
    let mse_val = audio_mse.item();
    let weighted_img = ops::scale(tape, &image_mae, beta)?;
    let weighted_aud = ops::scale(tape, &audio_mse, 1.0 - beta)?;
    let total = ops::add(tape, &weighted_img, &weighted_aud)?;
    Ok(CompositeLoss { total, image_mae: mae_val, audio_mse: mse_val })
}

pub struct CompositeLoss {
    pub total: Tensor,
    pub image_mae: f32,
    pub audio_mse: f32,
}

// ---- soft-DTW -----------------------------------------------------------------

const NEG_INF: f64 = f64::NEG_INFINITY;

fn softmin3(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let m = a.min(b).min(c);
    if m.is_infinite() {
        return m;
    }
    let sum = (-(a - m) / gamma).exp() + (-(b - m) / gamma).exp() + (-(c - m) / gamma).exp();
    m - gamma * sum.ln()
}

/// Forward DP. Returns the (n+1) x (m+1) R grid (index [i][j] for prefix
/// lengths i, j) with R[0][0] = 0 and the borders at +inf.
fn dtw_forward(a: &[f32], b: &[f32], gamma: f64) -> Vec<f64> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut r = vec![f64::INFINITY; (n + 1) * w];
    r[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let d = {
                let diff = a[i - 1] as f64 - b[j - 1] as f64;
                diff * diff
            };
            let sm = softmin3(r[(i - 1) * w + j], r[i * w + j - 1], r[(i - 1) * w + j - 1], gamma);
            r[i * w + j] = d + sm;
        }
    }
    r
}

/// Alignment-expectation backward recursion; returns (da, db) for upstream
/// gradient 1.
fn dtw_backward(a: &[f32], b: &[f32], gamma: f64, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let cost = |i: usize, j: usize| -> f64 {
        if i > n || j > m {
            0.0
        } else {
            let d = a[i - 1] as f64 - b[j - 1] as f64;
            d * d
        }
    };
    // padded R with a -inf border and R[n+1][m+1] = R[n][m]
    let wp = m + 2;
    let mut rp = vec![NEG_INF; (n + 2) * wp];
    for i in 1..=n {
        for j in 1..=m {
            rp[i * wp + j] = r[i * w + j];
        }
    }
    rp[(n + 1) * wp + m + 1] = r[n * w + m];
    let mut e = vec![0.0f64; (n + 2) * wp];
    e[(n + 1) * wp + m + 1] = 1.0;
    for i in (1..=n).rev() {
        for j in (1..=m).rev() {
            let rij = rp[i * wp + j];
            let ea = ((rp[(i + 1) * wp + j] - rij - cost(i + 1, j)) / gamma).exp();
            let eb = ((rp[i * wp + j + 1] - rij - cost(i, j + 1)) / gamma).exp();
            let ec = ((rp[(i + 1) * wp + j + 1] - rij - cost(i + 1, j + 1)) / gamma).exp();
            e[i * wp + j] = ea * e[(i + 1) * wp + j]
                + eb * e[i * wp + j + 1]
                + ec * e[(i + 1) * wp + j + 1];
        }
    }
    let mut da = vec![0.0f64; n];
    let mut db = vec![0.0f64; m];
    for i in 1..=n {
        for j in 1..=m {
            let expect = e[i * wp + j];
            if expect == 0.0 {
                continue;
            }
            let diff = a[i - 1] as f64 - b[j - 1] as f64;
            da[i - 1] += expect * 2.0 * diff;
            db[j - 1] -= expect * 2.0 * diff;
        }
    }
    (da, db)
}

/// soft-DTW value between two sequences.
pub fn soft_dtw(a: &[f32], b: &[f32], gamma: f32) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dimension("soft_dtw: empty sequence".into()));
    }
    if gamma <= 0.0 {
        return Err(Error::Config("soft_dtw: gamma must be > 0".into()));
    }
    let r = dtw_forward(a, b, gamma as f64);
    Ok(r[a.len() * (b.len() + 1) + b.len()])
}

/// soft-DTW as a scalar-producing tape op over 1-D tensors.
pub fn soft_dtw_op(tape: &Tape, a: &Tensor, b: &Tensor, gamma: f32) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 1 || sb.len() != 1 {
        return Err(Error::Dimension("soft_dtw_op expects 1-D tensors".into()));
    }
    if sa[0] == 0 || sb[0] == 0 {
        return Err(Error::Dimension("soft_dtw: empty sequence".into()));
    }
    if gamma <= 0.0 {
        return Err(Error::Config("soft_dtw: gamma must be > 0".into()));
    }
    let av = a.to_vec();
    let bv = b.to_vec();
    let g = gamma as f64;
    let r = dtw_forward(&av, &bv, g);
    let value = r[av.len() * (bv.len() + 1) + bv.len()];
    let out = Tensor::from_vec(&[1], vec![value as f32])?;
    let (a_c, b_c, out_c) = (a.clone(), b.clone(), out.clone());
    let (na, nb) = (a.needs_grad(), b.needs_grad());
    tape.record(&out, move || {
        if !na && !nb {
            return;
        }
        let upstream = out_c.grad_or_zeros()[0] as f64;
        let (da, db) = dtw_backward(&av, &bv, g, &r);
        if na {
            let ga: Vec<f32> = da.iter().map(|&v| (v * upstream) as f32).collect();
            a_c.accumulate_grad(&ga);
        }
        if nb {
            let gb: Vec<f32> = db.iter().map(|&v| (v * upstream) as f32).collect();
            b_c.accumulate_grad(&gb);
        }
    });
    Ok(out)
}

// ---- decimation ----------------------------------------------------------------

/// Every `factor`-th sample, starting at index 0.
pub fn decimate(samples: &[f32], factor: usize) -> Vec<f32> {
    samples.iter().step_by(factor.max(1)).copied().collect()
}

/// Strided decimation as a tape op (gradient scatters back to the kept
/// positions).
pub fn decimate_op(tape: &Tape, w: &Tensor, factor: usize) -> Result<Tensor> {
    let shape = w.shape();
    if shape.len() != 1 {
        return Err(Error::Dimension("decimate_op expects a 1-D tensor".into()));
    }
    if factor == 0 {
        return Err(Error::Config("decimation factor must be >= 1".into()));
    }
    let len = shape[0];
    let data = decimate(&w.data(), factor);
    let kept = data.len();
    let out = Tensor::from_vec(&[kept], data)?;
    let (w_c, out_c) = (w.clone(), out.clone());
    let needs = w.needs_grad();
    tape.record(&out, move || {
        if !needs {
            return;
        }
        let g = out_c.grad_or_zeros();
        let mut gw = vec![0.0f32; len];
        for (k, &gv) in g.iter().enumerate() {
            gw[k * factor] = gv;
        }
        w_c.accumulate_grad(&gw);
    });
    Ok(out)
}

// ---- total loss ----------------------------------------------------------------

pub struct TotalLoss {
    pub total: Tensor,
    pub image_mae: f32,
    pub audio_mse: f32,
    pub dtw_term: f32,
}

/// composite + lambda * soft_dtw over decimated waveforms. The host waveform
/// enters as a constant; lambda = 0 skips the warping term entirely, making
/// the result bitwise equal to the composite loss.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    tape: &Tape,
    s: &Tensor,
    s_rev: &Tensor,
    c_host: &Tensor,
    c_cont: &Tensor,
    host_wave: &[f32],
    cont_wave: &Tensor,
    weights: &LossWeights,
    decimation: usize,
) -> Result<TotalLoss> {
    weights.validate()?;
    let composite = composite_loss(tape, s, s_rev, c_host, c_cont, weights.beta)?;
    if weights.lambda == 0.0 {
        return Ok(TotalLoss {
            total: composite.total,
            image_mae: composite.image_mae,
            audio_mse: composite.audio_mse,
            dtw_term: 0.0,
        });
    }
    let host_dec_data = decimate(host_wave, decimation);
    let host_dec = Tensor::from_vec(&[host_dec_data.len()], host_dec_data)
        .map_err(crate::error::Error::from)?;
    let cont_dec = decimate_op(tape, cont_wave, decimation)?;
    let dtw = soft_dtw_op(tape, &host_dec, &cont_dec, weights.gamma)?;
    let dtw_val = dtw.item();
    let weighted = ops::scale(tape, &dtw, weights.lambda)?;
    let total = ops::add(tape, &composite.total, &weighted)?;
    Ok(TotalLoss {
        total,
        image_mae: composite.image_mae,
        audio_mse: composite.audio_mse,
        dtw_term: dtw_val,
    })
}
