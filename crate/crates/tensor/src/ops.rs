//! Differentiable operations. Each op computes its forward value, checks the
//! result for NaN/Inf, and records a backward closure on the tape.
//!
//! Backward closures follow one discipline: copy out every buffer they need
//! first, then accumulate into input gradients one tensor at a time. This
//! keeps `RefCell` borrows disjoint even when an op is fed the same tensor
//! twice (fan-in), and fan-out sums contributions across closures.

use crate::conv;
use crate::error::{Result, TensorError};
use crate::tape::Tape;
use crate::tensor::{ensure_finite, Tensor};

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Dimension(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Constants that were never touched by an op need no gradient.
fn needs_grad(t: &Tensor) -> bool {
    t.needs_grad()
}

fn output(_tape: &Tape, shape: &[usize], data: Vec<f32>, op: &str) -> Result<Tensor> {
    ensure_finite(&data, op)?;
    // Origin is stamped by Tape::record at the call site.
    Ok(Tensor::from_parts(shape.to_vec(), data, false))
}

pub fn add(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "add")?;
    let data: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    let out = output(tape, &a.shape(), data, "add")?;
    let (a, b, o) = (a.clone(), b.clone(), out.clone());
    let (na, nb) = (needs_grad(&a), needs_grad(&b));
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        if na {
            a.accumulate_grad(&g);
        }
        if nb {
            b.accumulate_grad(&g);
        }
    });
    Ok(out)
}

pub fn sub(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "sub")?;
    let data: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    let out = output(tape, &a.shape(), data, "sub")?;
    let (a, b, o) = (a.clone(), b.clone(), out.clone());
    let (na, nb) = (needs_grad(&a), needs_grad(&b));
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        if na {
            a.accumulate_grad(&g);
        }
        if nb {
            let neg: Vec<f32> = g.iter().map(|v| -v).collect();
            b.accumulate_grad(&neg);
        }
    });
    Ok(out)
}

pub fn mul(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "mul")?;
    let data: Vec<f32> = a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect();
    let out = output(tape, &a.shape(), data, "mul")?;
    let (a, b, o) = (a.clone(), b.clone(), out.clone());
    let (na, nb) = (needs_grad(&a), needs_grad(&b));
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        let ad = a.to_vec();
        let bd = b.to_vec();
        if na {
            let da: Vec<f32> = g.iter().zip(&bd).map(|(gi, bi)| gi * bi).collect();
            a.accumulate_grad(&da);
        }
        if nb {
            let db: Vec<f32> = g.iter().zip(&ad).map(|(gi, ai)| gi * ai).collect();
            b.accumulate_grad(&db);
        }
    });
    Ok(out)
}

/// y = c * a for a plain constant c.
pub fn scale(tape: &Tape, a: &Tensor, c: f32) -> Result<Tensor> {
    let data: Vec<f32> = a.data().iter().map(|x| c * x).collect();
    let out = output(tape, &a.shape(), data, "scale")?;
    let (a, o) = (a.clone(), out.clone());
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            let g = o.grad_or_zeros();
            let da: Vec<f32> = g.iter().map(|gi| c * gi).collect();
            a.accumulate_grad(&da);
        }
    });
    Ok(out)
}

/// y = w * a where w is a single-element (learnable) tensor.
pub fn scale_by(tape: &Tape, a: &Tensor, w: &Tensor) -> Result<Tensor> {
    if w.numel() != 1 {
        return Err(TensorError::Dimension("scale_by: w must be a scalar".into()));
    }
    let wv = w.item();
    let data: Vec<f32> = a.data().iter().map(|x| wv * x).collect();
    let out = output(tape, &a.shape(), data, "scale_by")?;
    let (a, w, o) = (a.clone(), w.clone(), out.clone());
    let (na, nw) = (needs_grad(&a), needs_grad(&w));
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        let wv = w.item();
        let ad = a.to_vec();
        if na {
            let da: Vec<f32> = g.iter().map(|gi| wv * gi).collect();
            a.accumulate_grad(&da);
        }
        if nw {
            let dw: f32 = g.iter().zip(&ad).map(|(gi, ai)| gi * ai).sum();
            w.accumulate_grad(&[dw]);
        }
    });
    Ok(out)
}

/// y = a + k for a constant offset vector (identity gradient).
pub fn add_const(tape: &Tape, a: &Tensor, k: &[f32]) -> Result<Tensor> {
    if k.len() != a.numel() {
        return Err(TensorError::Dimension("add_const: length mismatch".into()));
    }
    let data: Vec<f32> = a.data().iter().zip(k).map(|(x, o)| x + o).collect();
    let out = output(tape, &a.shape(), data, "add_const")?;
    let (a, o) = (a.clone(), out.clone());
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            a.accumulate_grad(&o.grad_or_zeros());
        }
    });
    Ok(out)
}

/// y = a .* m for a constant multiplier vector.
pub fn mul_const(tape: &Tape, a: &Tensor, m: &[f32]) -> Result<Tensor> {
    if m.len() != a.numel() {
        return Err(TensorError::Dimension("mul_const: length mismatch".into()));
    }
    let data: Vec<f32> = a.data().iter().zip(m).map(|(x, o)| x * o).collect();
    let out = output(tape, &a.shape(), data, "mul_const")?;
    let (a, o) = (a.clone(), out.clone());
    let m = m.to_vec();
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            let g = o.grad_or_zeros();
            let da: Vec<f32> = g.iter().zip(&m).map(|(gi, mi)| gi * mi).collect();
            a.accumulate_grad(&da);
        }
    });
    Ok(out)
}

pub fn reshape(tape: &Tape, a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    if n != a.numel() {
        return Err(TensorError::Dimension(format!(
            "reshape: {:?} -> {:?} changes element count",
            a.shape(),
            shape
        )));
    }
    let out = output(tape, shape, a.to_vec(), "reshape")?;
    let (a, o) = (a.clone(), out.clone());
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            a.accumulate_grad(&o.grad_or_zeros());
        }
    });
    Ok(out)
}

/// Concatenate along the channel axis of [N, C, H, W] tensors.
pub fn concat_channels(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] {
        return Err(TensorError::Dimension(format!(
            "concat_channels: incompatible shapes {sa:?} and {sb:?}"
        )));
    }
    let (n, ca, cb, hw) = (sa[0], sa[1], sb[1], sa[2] * sa[3]);
    let mut data = Vec::with_capacity(n * (ca + cb) * hw);
    {
        let ad = a.data();
        let bd = b.data();
        for i in 0..n {
            data.extend_from_slice(&ad[i * ca * hw..(i + 1) * ca * hw]);
            data.extend_from_slice(&bd[i * cb * hw..(i + 1) * cb * hw]);
        }
    }
    let out = output(tape, &[n, ca + cb, sa[2], sa[3]], data, "concat_channels")?;
    let (a, b, o) = (a.clone(), b.clone(), out.clone());
    let (na, nb) = (needs_grad(&a), needs_grad(&b));
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        let stride = (ca + cb) * hw;
        if na {
            let mut da = Vec::with_capacity(n * ca * hw);
            for i in 0..n {
                da.extend_from_slice(&g[i * stride..i * stride + ca * hw]);
            }
            a.accumulate_grad(&da);
        }
        if nb {
            let mut db = Vec::with_capacity(n * cb * hw);
            for i in 0..n {
                db.extend_from_slice(&g[i * stride + ca * hw..(i + 1) * stride]);
            }
            b.accumulate_grad(&db);
        }
    });
    Ok(out)
}

/// Keep channels [start, start+count) of an [N, C, H, W] tensor.
pub fn slice_channels(tape: &Tape, a: &Tensor, start: usize, count: usize) -> Result<Tensor> {
    let s = a.shape();
    if s.len() != 4 || start + count > s[1] || count == 0 {
        return Err(TensorError::Dimension(format!(
            "slice_channels: channels {start}..{} of shape {s:?}",
            start + count
        )));
    }
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    let mut data = Vec::with_capacity(n * count * hw);
    {
        let ad = a.data();
        for i in 0..n {
            let base = (i * c + start) * hw;
            data.extend_from_slice(&ad[base..base + count * hw]);
        }
    }
    let out = output(tape, &[n, count, s[2], s[3]], data, "slice_channels")?;
    let (a, o) = (a.clone(), out.clone());
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            let g = o.grad_or_zeros();
            let mut da = vec![0.0f32; n * c * hw];
            for i in 0..n {
                let src = &g[i * count * hw..(i + 1) * count * hw];
                da[(i * c + start) * hw..(i * c + start) * hw + count * hw]
                    .copy_from_slice(src);
            }
            a.accumulate_grad(&da);
        }
    });
    Ok(out)
}

pub fn sum(tape: &Tape, a: &Tensor) -> Result<Tensor> {
    let s: f32 = a.data().iter().sum();
    let out = output(tape, &[1], vec![s], "sum")?;
    let (a, o) = (a.clone(), out.clone());
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            let g = o.grad_or_zeros()[0];
            a.accumulate_grad(&vec![g; a.numel()]);
        }
    });
    Ok(out)
}

pub fn mean(tape: &Tape, a: &Tensor) -> Result<Tensor> {
    let n = a.numel() as f32;
    let s: f32 = a.data().iter().sum();
    let out = output(tape, &[1], vec![s / n], "mean")?;
    let (a, o) = (a.clone(), out.clone());
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            let g = o.grad_or_zeros()[0] / n;
            a.accumulate_grad(&vec![g; a.numel()]);
        }
    });
    Ok(out)
}

/// Mean absolute error, with the usual sign(0) = 0 subgradient.
pub fn mae(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "mae")?;
    let n = a.numel() as f32;
    let s: f32 = a.data().iter().zip(b.data().iter()).map(|(x, y)| (x - y).abs()).sum();
    let out = output(tape, &[1], vec![s / n], "mae")?;
    let (a, b, o) = (a.clone(), b.clone(), out.clone());
    let (na, nb) = (needs_grad(&a), needs_grad(&b));
    tape.record(&out, move || {
        let g = o.grad_or_zeros()[0] / n;
        let ad = a.to_vec();
        let bd = b.to_vec();
        let da: Vec<f32> = ad
            .iter()
            .zip(&bd)
            .map(|(x, y)| {
                let d = x - y;
                if d > 0.0 {
                    g
                } else if d < 0.0 {
                    -g
                } else {
                    0.0
                }
            })
            .collect();
        if na {
            a.accumulate_grad(&da);
        }
        if nb {
            let db: Vec<f32> = da.iter().map(|v| -v).collect();
            b.accumulate_grad(&db);
        }
    });
    Ok(out)
}

/// Mean squared error.
pub fn mse(tape: &Tape, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "mse")?;
    let n = a.numel() as f32;
    let s: f32 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let out = output(tape, &[1], vec![s / n], "mse")?;
    let (a, b, o) = (a.clone(), b.clone(), out.clone());
    let (na, nb) = (needs_grad(&a), needs_grad(&b));
    tape.record(&out, move || {
        let g = o.grad_or_zeros()[0] * 2.0 / n;
        let ad = a.to_vec();
        let bd = b.to_vec();
        let da: Vec<f32> = ad.iter().zip(&bd).map(|(x, y)| g * (x - y)).collect();
        if na {
            a.accumulate_grad(&da);
        }
        if nb {
            let db: Vec<f32> = da.iter().map(|v| -v).collect();
            b.accumulate_grad(&db);
        }
    });
    Ok(out)
}

/// x if x >= 0 else alpha * x; gradient 1 or alpha.
pub fn leaky_relu(tape: &Tape, a: &Tensor, alpha: f32) -> Result<Tensor> {
    let data: Vec<f32> = a
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { alpha * x })
        .collect();
    let out = output(tape, &a.shape(), data, "leaky_relu")?;
    let (a, o) = (a.clone(), out.clone());
    let na = needs_grad(&a);
    tape.record(&out, move || {
        if na {
            let g = o.grad_or_zeros();
            let ad = a.to_vec();
            let da: Vec<f32> = g
                .iter()
                .zip(&ad)
                .map(|(gi, &x)| if x >= 0.0 { *gi } else { alpha * gi })
                .collect();
            a.accumulate_grad(&da);
        }
    });
    Ok(out)
}

/// Per-channel standardization over the N, H, W axes with current-batch
/// statistics (biased variance), then the gamma/beta affine map. Used in both
/// training and evaluation; there are no running statistics.
pub fn batch_norm2d(
    tape: &Tape,
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f32,
) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(TensorError::Dimension(format!(
            "batch_norm2d: expected [N,C,H,W], got {s:?}"
        )));
    }
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::Dimension(
            "batch_norm2d: gamma/beta must have shape [C]".into(),
        ));
    }
    if eps <= 0.0 {
        return Err(TensorError::Contract("batch_norm2d: eps must be > 0".into()));
    }
    let m = n * h * w;
    if m < 2 {
        return Err(TensorError::Numeric(
            "batch_norm2d: variance undefined for a single element per channel".into(),
        ));
    }

    let hw = h * w;
    let mut mean = vec![0.0f32; c];
    let mut inv_std = vec![0.0f32; c];
    let mut data = vec![0.0f32; x.numel()];
    {
        let xd = x.data();
        let gd = gamma.data();
        let bd = beta.data();
        for ci in 0..c {
            let mut acc = 0.0f64;
            for b in 0..n {
                let plane = &xd[(b * c + ci) * hw..(b * c + ci + 1) * hw];
                acc += plane.iter().map(|&v| v as f64).sum::<f64>();
            }
            let mu = (acc / m as f64) as f32;
            let mut var_acc = 0.0f64;
            for b in 0..n {
                let plane = &xd[(b * c + ci) * hw..(b * c + ci + 1) * hw];
                var_acc += plane
                    .iter()
                    .map(|&v| {
                        let d = (v - mu) as f64;
                        d * d
                    })
                    .sum::<f64>();
            }
            let var = (var_acc / m as f64) as f32;
            let istd = 1.0 / (var + eps).sqrt();
            mean[ci] = mu;
            inv_std[ci] = istd;
            let (gm, bt) = (gd[ci], bd[ci]);
            for b in 0..n {
                let base = (b * c + ci) * hw;
                for i in 0..hw {
                    data[base + i] = gm * (xd[base + i] - mu) * istd + bt;
                }
            }
        }
    }
    let out = output(tape, &s, data, "batch_norm2d")?;
    let (x, gamma, beta, o) = (x.clone(), gamma.clone(), beta.clone(), out.clone());
    let (nx, ng, nb) = (needs_grad(&x), needs_grad(&gamma), needs_grad(&beta));
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        let xd = x.to_vec();
        let gd = gamma.to_vec();
        let mf = m as f32;
        let mut dx = vec![0.0f32; xd.len()];
        let mut dgamma = vec![0.0f32; c];
        let mut dbeta = vec![0.0f32; c];
        for ci in 0..c {
            let (mu, istd) = (mean[ci], inv_std[ci]);
            let mut sum_g = 0.0f32;
            let mut sum_gxh = 0.0f32;
            for b in 0..n {
                let base = (b * c + ci) * hw;
                for i in 0..hw {
                    let xh = (xd[base + i] - mu) * istd;
                    sum_g += g[base + i];
                    sum_gxh += g[base + i] * xh;
                }
            }
            dgamma[ci] = sum_gxh;
            dbeta[ci] = sum_g;
            if nx {
                let k = gd[ci] * istd;
                for b in 0..n {
                    let base = (b * c + ci) * hw;
                    for i in 0..hw {
                        let xh = (xd[base + i] - mu) * istd;
                        dx[base + i] = k * (g[base + i] - sum_g / mf - xh * sum_gxh / mf);
                    }
                }
            }
        }
        if nx {
            x.accumulate_grad(&dx);
        }
        if ng {
            gamma.accumulate_grad(&dgamma);
        }
        if nb {
            beta.accumulate_grad(&dbeta);
        }
    });
    Ok(out)
}

/// 3x3 cross-correlation with stride and zero padding.
pub fn conv2d(
    tape: &Tape,
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let si = input.shape();
    let sw = weight.shape();
    if si.len() != 4 || sw.len() != 4 || sw[2] != conv::K || sw[3] != conv::K {
        return Err(TensorError::Dimension(format!(
            "conv2d: input [N,Cin,H,W] and weight [Cout,Cin,3,3] required, got {si:?} / {sw:?}"
        )));
    }
    if si[1] != sw[1] {
        return Err(TensorError::Dimension(format!(
            "conv2d: input channels {} != weight channels {}",
            si[1], sw[1]
        )));
    }
    if stride == 0 {
        return Err(TensorError::Contract("conv2d: stride must be >= 1".into()));
    }
    let (n, cin, h, w) = (si[0], si[1], si[2], si[3]);
    let cout = sw[0];
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(TensorError::Dimension("conv2d: bias must be [Cout]".into()));
        }
    }
    let oh = conv::conv_out_dim(h, stride, padding)
        .filter(|&d| d >= 1)
        .ok_or_else(|| TensorError::Dimension(format!("conv2d: output collapses for H={h}")))?;
    let ow = conv::conv_out_dim(w, stride, padding)
        .filter(|&d| d >= 1)
        .ok_or_else(|| TensorError::Dimension(format!("conv2d: output collapses for W={w}")))?;

    let data = {
        let bias_data = bias.map(|b| b.to_vec());
        conv::forward(
            &input.data(),
            n,
            cin,
            h,
            w,
            &weight.data(),
            cout,
            bias_data.as_deref(),
            stride,
            padding,
            oh,
            ow,
        )
    };
    let out = output(tape, &[n, cout, oh, ow], data, "conv2d")?;
    let (input_c, weight_c, o) = (input.clone(), weight.clone(), out.clone());
    let bias_c = bias.cloned();
    let (ni, nw) = (needs_grad(input), needs_grad(weight));
    let nb = bias.map(needs_grad).unwrap_or(false);
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        if ni {
            let gin = conv::input_grad(
                &g, n, cout, oh, ow, &weight_c.to_vec(), cin, stride, padding, h, w,
            );
            input_c.accumulate_grad(&gin);
        }
        if nw {
            let gw = conv::weight_grad(
                &input_c.to_vec(), n, cin, h, w, &g, cout, stride, padding, oh, ow,
            );
            weight_c.accumulate_grad(&gw);
        }
        if nb {
            if let Some(b) = &bias_c {
                b.accumulate_grad(&conv::bias_grad(&g, n, cout, oh * ow));
            }
        }
    });
    Ok(out)
}

/// Adjoint of `conv2d` with matching stride/padding; weight layout is
/// [Cin, Cout, 3, 3]. `output_padding` must be smaller than the stride.
pub fn conv_transpose2d(
    tape: &Tape,
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor> {
    let si = input.shape();
    let sw = weight.shape();
    if si.len() != 4 || sw.len() != 4 || sw[2] != conv::K || sw[3] != conv::K {
        return Err(TensorError::Dimension(format!(
            "conv_transpose2d: input [N,Cin,H,W] and weight [Cin,Cout,3,3] required, got {si:?} / {sw:?}"
        )));
    }
    if si[1] != sw[0] {
        return Err(TensorError::Dimension(format!(
            "conv_transpose2d: input channels {} != weight rows {}",
            si[1], sw[0]
        )));
    }
    if stride == 0 {
        return Err(TensorError::Contract("conv_transpose2d: stride must be >= 1".into()));
    }
    if output_padding >= stride {
        return Err(TensorError::Contract(
            "conv_transpose2d: output_padding must be < stride".into(),
        ));
    }
    let (n, cin, h, w) = (si[0], si[1], si[2], si[3]);
    let cout = sw[1];
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(TensorError::Dimension("conv_transpose2d: bias must be [Cout]".into()));
        }
    }
    let oh = conv::tconv_out_dim(h, stride, padding, output_padding)
        .filter(|&d| d >= 1)
        .ok_or_else(|| {
            TensorError::Dimension(format!("conv_transpose2d: output collapses for H={h}"))
        })?;
    let ow = conv::tconv_out_dim(w, stride, padding, output_padding)
        .filter(|&d| d >= 1)
        .ok_or_else(|| {
            TensorError::Dimension(format!("conv_transpose2d: output collapses for W={w}"))
        })?;

    // The [Cin, Cout, 3, 3] buffer reads as a conv weight whose "out" channels
    // are Cin and "in" channels are Cout, so forward is the conv input-grad.
    let mut data = conv::input_grad(
        &input.data(),
        n,
        cin,
        h,
        w,
        &weight.data(),
        cout,
        stride,
        padding,
        oh,
        ow,
    );
    if let Some(b) = bias {
        let bd = b.data();
        let span = oh * ow;
        for bi in 0..n {
            for co in 0..cout {
                let bv = bd[co];
                for v in &mut data[(bi * cout + co) * span..(bi * cout + co + 1) * span] {
                    *v += bv;
                }
            }
        }
    }
    let out = output(tape, &[n, cout, oh, ow], data, "conv_transpose2d")?;
    let (input_c, weight_c, o) = (input.clone(), weight.clone(), out.clone());
    let bias_c = bias.cloned();
    let (ni, nw) = (needs_grad(input), needs_grad(weight));
    let nb = bias.map(needs_grad).unwrap_or(false);
    tape.record(&out, move || {
        let g = o.grad_or_zeros();
        if ni {
            let gin = conv::forward(
                &g, n, cout, oh, ow, &weight_c.to_vec(), cin, None, stride, padding, h, w,
            );
            input_c.accumulate_grad(&gin);
        }
        if nw {
            let gw = conv::weight_grad(
                &g, n, cout, oh, ow, &input_c.to_vec(), cin, stride, padding, h, w,
            );
            weight_c.accumulate_grad(&gw);
        }
        if nb {
            if let Some(b) = &bias_c {
                b.accumulate_grad(&conv::bias_grad(&g, n, cout, oh * ow));
            }
        }
    });
    Ok(out)
}
