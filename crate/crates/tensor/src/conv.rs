//! 3x3 convolution kernels shared by `conv2d`, `conv_transpose2d` and their
//! backward passes. Everything is expressed through three primitives:
//!
//! * `forward`      — cross-correlation via im2col + gemm
//! * `input_grad`   — adjoint of `forward` w.r.t. its input (col2im path)
//! * `weight_grad`  — adjoint w.r.t. the kernel
//!
//! `conv_transpose2d` with weight layout [Cin, Cout, 3, 3] is exactly
//! `input_grad` read as a forward map, so the transposed convolution and the
//! adjoint identity <conv(x), y> == <x, tconv(y)> share one code path.

use crate::gemm::sgemm;

pub const K: usize = 3;

/// floor((h + 2p - 3) / s) + 1
pub fn conv_out_dim(h: usize, stride: usize, padding: usize) -> Option<usize> {
    let span = h + 2 * padding;
    if span < K {
        return None;
    }
    Some((span - K) / stride + 1)
}

/// (h - 1) * s - 2p + 3 + output_padding
pub fn tconv_out_dim(
    h: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    let grown = (h - 1) * stride + K + output_padding;
    if grown <= 2 * padding {
        return None;
    }
    Some(grown - 2 * padding)
}

/// Scatter one input channel plane into im2col rows.
/// cols is [cin*9, oh*ow] row-major.
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
) {
    debug_assert_eq!(cols.len(), cin * K * K * oh * ow);
    let span = oh * ow;
    for c in 0..cin {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for kh in 0..K {
            for kw in 0..K {
                let row = &mut cols[(c * K * K + kh * K + kw) * span..][..span];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - padding as isize;
                    let dst = &mut row[oy * ow..oy * ow + ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..iy as usize * w + w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kw) as isize - padding as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: accumulate im2col rows back into an input plane.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    out: &mut [f32],
) {
    debug_assert_eq!(out.len(), cin * h * w);
    let span = oh * ow;
    for c in 0..cin {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for kh in 0..K {
            for kw in 0..K {
                let row = &cols[(c * K * K + kh * K + kw) * span..][..span];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..iy as usize * w + w];
                    let src = &row[oy * ow..oy * ow + ow];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * stride + kw) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// out[n, co, :, :] = sum_ci weight[co, ci] * input[n, ci] (+ bias[co])
#[allow(clippy::too_many_arguments)]
pub fn forward(
    input: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    cout: usize,
    bias: Option<&[f32]>,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let span = oh * ow;
    let kdim = cin * K * K;
    let mut out = vec![0.0f32; n * cout * span];
    let mut cols = vec![0.0f32; kdim * span];
    for b in 0..n {
        im2col(
            &input[b * cin * h * w..(b + 1) * cin * h * w],
            cin,
            h,
            w,
            stride,
            padding,
            oh,
            ow,
            &mut cols,
        );
        sgemm(
            cout,
            kdim,
            span,
            1.0,
            weight,
            kdim as isize,
            1,
            &cols,
            span as isize,
            1,
            0.0,
            &mut out[b * cout * span..(b + 1) * cout * span],
        );
    }
    if let Some(bias) = bias {
        for b in 0..n {
            for co in 0..cout {
                let bv = bias[co];
                for v in &mut out[(b * cout + co) * span..(b * cout + co + 1) * span] {
                    *v += bv;
                }
            }
        }
    }
    out
}

/// Adjoint of `forward` w.r.t. the input: maps [n, cout, oh, ow] back to
/// [n, cin, h, w] with the same weight/stride/padding.
#[allow(clippy::too_many_arguments)]
pub fn input_grad(
    gout: &[f32],
    n: usize,
    cout: usize,
    oh: usize,
    ow: usize,
    weight: &[f32],
    cin: usize,
    stride: usize,
    padding: usize,
    h: usize,
    w: usize,
) -> Vec<f32> {
    let span = oh * ow;
    let kdim = cin * K * K;
    let mut gin = vec![0.0f32; n * cin * h * w];
    let mut cols = vec![0.0f32; kdim * span];
    for b in 0..n {
        // cols = weight^T [kdim, cout] x gout_b [cout, span]
        sgemm(
            kdim,
            cout,
            span,
            1.0,
            weight,
            1,
            kdim as isize,
            &gout[b * cout * span..(b + 1) * cout * span],
            span as isize,
            1,
            0.0,
            &mut cols,
        );
        col2im(
            &cols,
            cin,
            h,
            w,
            stride,
            padding,
            oh,
            ow,
            &mut gin[b * cin * h * w..(b + 1) * cin * h * w],
        );
    }
    gin
}

/// Adjoint of `forward` w.r.t. the weight: [cout, cin*9], summed over batch.
#[allow(clippy::too_many_arguments)]
pub fn weight_grad(
    input: &[f32],
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    gout: &[f32],
    cout: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let span = oh * ow;
    let kdim = cin * K * K;
    let mut gw = vec![0.0f32; cout * kdim];
    let mut cols = vec![0.0f32; kdim * span];
    for b in 0..n {
        im2col(
            &input[b * cin * h * w..(b + 1) * cin * h * w],
            cin,
            h,
            w,
            stride,
            padding,
            oh,
            ow,
            &mut cols,
        );
        // gw += gout_b [cout, span] x cols^T [span, kdim]
        sgemm(
            cout,
            span,
            kdim,
            1.0,
            &gout[b * cout * span..(b + 1) * cout * span],
            span as isize,
            1,
            &cols,
            1,
            span as isize,
            1.0,
            &mut gw,
        );
    }
    gw
}

/// Per-output-channel spatial sums of gout: the bias gradient.
pub fn bias_grad(gout: &[f32], n: usize, cout: usize, span: usize) -> Vec<f32> {
    let mut gb = vec![0.0f32; cout];
    for b in 0..n {
        for co in 0..cout {
            let s: f32 = gout[(b * cout + co) * span..(b * cout + co + 1) * span]
                .iter()
                .sum();
            gb[co] += s;
        }
    }
    gb
}
