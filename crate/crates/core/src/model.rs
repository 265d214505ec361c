//! The hiding/reveal networks and the residual embedding geometry.
//!
//! An image enters as RGB + an appended zero channel, is rearranged into a
//! single 2S x 2S plane by a 2x2 pixel shuffle, and encoded into a residual
//! of the same size. The residual is tiled across the host spectrogram and
//! added; the receiver tile-averages, runs the reveal network, and
//! un-shuffles back to RGB.
//!
//! Both networks share one U-Net shape: two downsampling blocks (3x3 convs
//! with strides 2 and 4, each followed by batch norm and leaky ReLU), two
//! mirrored upsampling blocks (transposed convs with strides 4 and 2
//! interleaved with stride-1 convs), skip connections by channel
//! concatenation at matching resolutions, and a final 3x3 conv back to one
//! plane. Convolutions feeding a batch norm carry no bias.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;
use wavestamp_tensor::{load_checkpoint, ops, save_checkpoint, Tape, Tensor};

use crate::dsp::{FrameSpec, Spectrogram};
use crate::error::{Error, Result};
use crate::io::Image;

pub const LEAKY_ALPHA: f32 = 0.8;
pub const BN_EPS: f32 = 1e-5;
const BASE_WIDTH: usize = 32;
/// Total downsampling of the contracting path (strides 2*4*2*4).
const DOWN_FACTOR: usize = 64;

// ---- geometry -------------------------------------------------------------------

/// Stamp geometry plus the audio framing derived from it. The spectrogram is
/// (k_b * 2S) bins x (k_f * 2S) frames, so frame length and frame count are
/// fixed by the tiling; hop and clip length must satisfy
/// clip_samples >= frame_len + (num_frames - 1) * hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub image_side: usize,
    pub k_b: usize,
    pub k_f: usize,
    pub hop: usize,
    pub clip_samples: usize,
    pub sample_rate: u32,
}

impl Geometry {
    /// Desk scale: 64x64 images in a 128x128 spectrogram, one tile.
    pub fn desk() -> Geometry {
        Geometry {
            image_side: 64,
            k_b: 1,
            k_f: 1,
            hop: 63,
            clip_samples: 8192,
            sample_rate: 16_000,
        }
    }

    /// Full scale: 256x256 images in a 4096x1024 spectrogram (8x2 tiles).
    pub fn full_scale() -> Geometry {
        Geometry {
            image_side: 256,
            k_b: 8,
            k_f: 2,
            hop: 62,
            clip_samples: 67_522,
            sample_rate: 44_100,
        }
    }

    pub fn shuffled_side(&self) -> usize {
        2 * self.image_side
    }

    pub fn bins(&self) -> usize {
        self.k_b * self.shuffled_side()
    }

    pub fn frames(&self) -> usize {
        self.k_f * self.shuffled_side()
    }

    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec { frame_len: self.bins(), hop: self.hop, num_frames: self.frames() }
    }

    pub fn covered_samples(&self) -> usize {
        self.frame_spec().covered()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.image_side;
        if !s.is_power_of_two() || s < DOWN_FACTOR {
            return Err(Error::Geometry(format!(
                "image side must be a power of two >= {DOWN_FACTOR}, got {s}"
            )));
        }
        if self.k_b == 0 || self.k_f == 0 {
            return Err(Error::Geometry("tile counts must be >= 1".into()));
        }
        if self.hop == 0 || self.hop > self.bins() {
            return Err(Error::Geometry(format!(
                "hop {} must be in 1..={}",
                self.hop,
                self.bins()
            )));
        }
        if self.clip_samples < self.covered_samples() {
            return Err(Error::Geometry(format!(
                "clip of {} samples cannot carry {} frames of {} at hop {} ({} needed)",
                self.clip_samples,
                self.frames(),
                self.bins(),
                self.hop,
                self.covered_samples()
            )));
        }
        Ok(())
    }

    fn matches_spectrogram(&self, s: &Spectrogram) -> Result<()> {
        if s.bins() != self.bins() || s.frames() != self.frames() {
            return Err(Error::Geometry(format!(
                "spectrogram {}x{} does not match geometry {}x{}",
                s.bins(),
                s.frames(),
                self.bins(),
                self.frames()
            )));
        }
        Ok(())
    }
}

// ---- architecture variants --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchVariant {
    /// Residual stamp computed from the image alone (the reference setup).
    ResIndep,
    /// Residual stamp conditioned on a host summary.
    ResDep,
    /// Encoder output becomes the container directly; no identity path.
    PlainDep,
    /// Single learnable gain on the shuffled image.
    ResScale,
}

impl ArchVariant {
    pub fn is_cover_dependent(&self) -> bool {
        matches!(self, ArchVariant::ResDep | ArchVariant::PlainDep)
    }

    fn hiding_in_channels(&self) -> usize {
        if self.is_cover_dependent() {
            2
        } else {
            1
        }
    }

    fn code(&self) -> f32 {
        match self {
            ArchVariant::ResIndep => 0.0,
            ArchVariant::ResDep => 1.0,
            ArchVariant::PlainDep => 2.0,
            ArchVariant::ResScale => 3.0,
        }
    }

    fn from_code(code: f32) -> Result<ArchVariant> {
        match code as i32 {
            0 => Ok(ArchVariant::ResIndep),
            1 => Ok(ArchVariant::ResDep),
            2 => Ok(ArchVariant::PlainDep),
            3 => Ok(ArchVariant::ResScale),
            v => Err(Error::Format(format!("unknown variant code {v}"))),
        }
    }
}

impl std::fmt::Display for ArchVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArchVariant::ResIndep => write!(f, "res-indep"),
            ArchVariant::ResDep => write!(f, "res-dep"),
            ArchVariant::PlainDep => write!(f, "plain-dep"),
            ArchVariant::ResScale => write!(f, "res-scale"),
        }
    }
}

impl std::str::FromStr for ArchVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<ArchVariant> {
        match s {
            "res-indep" => Ok(ArchVariant::ResIndep),
            "res-dep" => Ok(ArchVariant::ResDep),
            "plain-dep" => Ok(ArchVariant::PlainDep),
            "res-scale" => Ok(ArchVariant::ResScale),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected res-indep, res-dep, plain-dep or res-scale)"
            ))),
        }
    }
}

// ---- pixel shuffle -----------------------------------------------------------------

/// [4, S, S] (channel-major) -> [2S, 2S]:
/// out[2i+di][2j+dj] = image[2*di+dj][i][j], so R,G,B,zero land at offsets
/// (0,0), (0,1), (1,0), (1,1) of each 2x2 block.
pub fn pixel_shuffle(image4: &[f32], s: usize) -> Result<Vec<f32>> {
    if image4.len() != 4 * s * s {
        return Err(Error::Dimension(format!(
            "pixel_shuffle: buffer {} != 4*{s}*{s}",
            image4.len()
        )));
    }
    let side = 2 * s;
    let mut out = vec![0.0f32; side * side];
    for i in 0..s {
        for j in 0..s {
            for di in 0..2 {
                for dj in 0..2 {
                    let ch = 2 * di + dj;
                    out[(2 * i + di) * side + 2 * j + dj] = image4[ch * s * s + i * s + j];
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(map: &[f32], side: usize) -> Result<Vec<f32>> {
    if !side.is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "pixel_unshuffle: side {side} must be even"
        )));
    }
    if map.len() != side * side {
        return Err(Error::Dimension(format!(
            "pixel_unshuffle: buffer {} != {side}^2",
            map.len()
        )));
    }
    let s = side / 2;
    let mut out = vec![0.0f32; 4 * s * s];
    for i in 0..s {
        for j in 0..s {
            for di in 0..2 {
                for dj in 0..2 {
                    let ch = 2 * di + dj;
                    out[ch * s * s + i * s + j] = map[(2 * i + di) * side + 2 * j + dj];
                }
            }
        }
    }
    Ok(out)
}

pub fn pixel_shuffle_op(tape: &Tape, image4: &Tensor) -> Result<Tensor> {
    let shape = image4.shape();
    if shape.len() != 4 || shape[0] != 1 || shape[1] != 4 || shape[2] != shape[3] {
        return Err(Error::Dimension(format!(
            "pixel_shuffle_op expects [1,4,S,S], got {shape:?}"
        )));
    }
    let s = shape[2];
    let data = pixel_shuffle(&image4.data(), s)?;
    let out = Tensor::from_vec(&[1, 1, 2 * s, 2 * s], data)?;
    let (src, dst) = (image4.clone(), out.clone());
    let needs = image4.needs_grad();
    tape.record(&out, move || {
        if needs {
            let g = dst.grad_or_zeros();
            src.accumulate_grad(&pixel_unshuffle(&g, 2 * s).expect("shapes fixed"));
        }
    });
    Ok(out)
}

pub fn pixel_unshuffle_op(tape: &Tape, map: &Tensor) -> Result<Tensor> {
    let shape = map.shape();
    if shape.len() != 4 || shape[0] != 1 || shape[1] != 1 || shape[2] != shape[3] {
        return Err(Error::Dimension(format!(
            "pixel_unshuffle_op expects [1,1,side,side], got {shape:?}"
        )));
    }
    let side = shape[2];
    let data = pixel_unshuffle(&map.data(), side)?;
    let s = side / 2;
    let out = Tensor::from_vec(&[1, 4, s, s], data)?;
    let (src, dst) = (map.clone(), out.clone());
    let needs = map.needs_grad();
    tape.record(&out, move || {
        if needs {
            let g = dst.grad_or_zeros();
            src.accumulate_grad(&pixel_shuffle(&g, s).expect("shapes fixed"));
        }
    });
    Ok(out)
}

// ---- tiling -----------------------------------------------------------------------

/// Tile a [side, side] residual into a [k_b*side, k_f*side] grid.
pub fn tile(residual: &[f32], side: usize, k_b: usize, k_f: usize) -> Vec<f32> {
    let (bins, frames) = (k_b * side, k_f * side);
    let mut out = vec![0.0f32; bins * frames];
    for b in 0..bins {
        let src_row = &residual[(b % side) * side..(b % side + 1) * side];
        let dst_row = &mut out[b * frames..(b + 1) * frames];
        for (f, v) in dst_row.iter_mut().enumerate() {
            *v = src_row[f % side];
        }
    }
    out
}

/// Mean over the k_b x k_f tiles of a [bins, frames] grid.
pub fn tile_average(values: &[f32], bins: usize, frames: usize, side: usize) -> Result<Vec<f32>> {
    if !bins.is_multiple_of(side) || !frames.is_multiple_of(side) || values.len() != bins * frames {
        return Err(Error::Geometry(format!(
            "tile_average: {bins}x{frames} not divisible into {side}x{side} tiles"
        )));
    }
    let (k_b, k_f) = (bins / side, frames / side);
    let count = (k_b * k_f) as f32;
    let mut out = vec![0.0f32; side * side];
    for a in 0..k_b {
        for b in 0..k_f {
            for u in 0..side {
                for v in 0..side {
                    out[u * side + v] += values[(u + side * a) * frames + (v + side * b)];
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v /= count;
    }
    Ok(out)
}

/// Tiling as a tape op: [1,1,side,side] -> [k_b*side, k_f*side].
pub fn tile_op(tape: &Tape, residual: &Tensor, k_b: usize, k_f: usize) -> Result<Tensor> {
    let shape = residual.shape();
    if shape.len() != 4 || shape[0] != 1 || shape[1] != 1 || shape[2] != shape[3] {
        return Err(Error::Dimension(format!(
            "tile_op expects [1,1,side,side], got {shape:?}"
        )));
    }
    let side = shape[2];
    let (bins, frames) = (k_b * side, k_f * side);
    let data = tile(&residual.data(), side, k_b, k_f);
    let out = Tensor::from_vec(&[bins, frames], data)?;
    let (src, dst) = (residual.clone(), out.clone());
    let needs = residual.needs_grad();
    tape.record(&out, move || {
        if needs {
            let g = dst.grad_or_zeros();
            let mut gr = vec![0.0f32; side * side];
            for b in 0..bins {
                for f in 0..frames {
                    gr[(b % side) * side + f % side] += g[b * frames + f];
                }
            }
            src.accumulate_grad(&gr);
        }
    });
    Ok(out)
}

/// Tile averaging as a tape op: [bins, frames] -> [1,1,side,side].
pub fn tile_average_op(tape: &Tape, spect: &Tensor, side: usize) -> Result<Tensor> {
    let shape = spect.shape();
    if shape.len() != 2 {
        return Err(Error::Dimension("tile_average_op expects [bins, frames]".into()));
    }
    let (bins, frames) = (shape[0], shape[1]);
    let data = tile_average(&spect.data(), bins, frames, side)?;
    let out = Tensor::from_vec(&[1, 1, side, side], data)?;
    let (src, dst) = (spect.clone(), out.clone());
    let needs = spect.needs_grad();
    let count = ((bins / side) * (frames / side)) as f32;
    tape.record(&out, move || {
        if needs {
            let g = dst.grad_or_zeros();
            let mut gs = vec![0.0f32; bins * frames];
            for b in 0..bins {
                for f in 0..frames {
                    gs[b * frames + f] = g[(b % side) * side + f % side] / count;
                }
            }
            src.accumulate_grad(&gs);
        }
    });
    Ok(out)
}

// ---- U-Net ------------------------------------------------------------------------

struct ConvUnit {
    w: Tensor,
    gamma: Tensor,
    beta: Tensor,
    stride: usize,
}

impl ConvUnit {
    fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, stride: usize) -> ConvUnit {
        ConvUnit {
            w: uniform_param(rng, &[cout, cin, 3, 3], cin * 9),
            gamma: Tensor::param(&[cout], vec![1.0; cout]).expect("const"),
            beta: Tensor::param(&[cout], vec![0.0; cout]).expect("const"),
            stride,
        }
    }

    fn apply(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let c = ops::conv2d(tape, x, &self.w, None, self.stride, 1)?;
        let n = ops::batch_norm2d(tape, &c, &self.gamma, &self.beta, BN_EPS)?;
        Ok(ops::leaky_relu(tape, &n, LEAKY_ALPHA)?)
    }
}

struct TConvUnit {
    w: Tensor,
    gamma: Tensor,
    beta: Tensor,
    stride: usize,
}

impl TConvUnit {
    fn new(rng: &mut ChaCha8Rng, cin: usize, cout: usize, stride: usize) -> TConvUnit {
        TConvUnit {
            w: uniform_param(rng, &[cin, cout, 3, 3], cin * 9),
            gamma: Tensor::param(&[cout], vec![1.0; cout]).expect("const"),
            beta: Tensor::param(&[cout], vec![0.0; cout]).expect("const"),
            stride,
        }
    }

    fn apply(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        // output_padding = stride - 1 makes the spatial size exactly stride * input
        let c = ops::conv_transpose2d(tape, x, &self.w, None, self.stride, 1, self.stride - 1)?;
        let n = ops::batch_norm2d(tape, &c, &self.gamma, &self.beta, BN_EPS)?;
        Ok(ops::leaky_relu(tape, &n, LEAKY_ALPHA)?)
    }
}

fn uniform_param(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f32).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::param(shape, data).expect("finite init")
}

pub struct UNet {
    d1: ConvUnit,
    d2: ConvUnit,
    d3: ConvUnit,
    d4: ConvUnit,
    u1: TConvUnit,
    c1: ConvUnit,
    u2: TConvUnit,
    c2: ConvUnit,
    u3: TConvUnit,
    c3: ConvUnit,
    u4: TConvUnit,
    c4: ConvUnit,
    head_w: Tensor,
    head_b: Tensor,
}

impl UNet {
    pub fn new(rng: &mut ChaCha8Rng, in_channels: usize) -> UNet {
        let w = BASE_WIDTH;
        UNet {
            d1: ConvUnit::new(rng, in_channels, w, 2),
            d2: ConvUnit::new(rng, w, w, 4),
            d3: ConvUnit::new(rng, w, 2 * w, 2),
            d4: ConvUnit::new(rng, 2 * w, 2 * w, 4),
            u1: TConvUnit::new(rng, 2 * w, 2 * w, 4),
            c1: ConvUnit::new(rng, 4 * w, 2 * w, 1),
            u2: TConvUnit::new(rng, 2 * w, w, 2),
            c2: ConvUnit::new(rng, 2 * w, w, 1),
            u3: TConvUnit::new(rng, w, w, 4),
            c3: ConvUnit::new(rng, 2 * w, w, 1),
            u4: TConvUnit::new(rng, w, w, 2),
            c4: ConvUnit::new(rng, w, w, 1),
            head_w: uniform_param(rng, &[1, w, 3, 3], w * 9),
            head_b: Tensor::param(&[1], vec![0.0]).expect("const"),
        }
    }

    /// Map [1, C, side, side] to [1, 1, side, side]. The side must be
    /// divisible by 64 (two x8 downsamplings) and large enough that the
    /// bottleneck keeps at least 2 spatial elements for batch statistics.
    pub fn forward(&self, tape: &Tape, x: &Tensor) -> Result<Tensor> {
        let shape = x.shape();
        if shape.len() != 4 || shape[2] != shape[3] {
            return Err(Error::Dimension(format!("expected square [1,C,side,side], got {shape:?}")));
        }
        let side = shape[2];
        if !side.is_multiple_of(DOWN_FACTOR) {
            return Err(Error::Dimension(format!(
                "input side {side} not divisible by {DOWN_FACTOR}"
            )));
        }
        let f1 = self.d1.apply(tape, x)?; // w @ side/2
        let f2 = self.d2.apply(tape, &f1)?; // w @ side/8
        let f3 = self.d3.apply(tape, &f2)?; // 2w @ side/16
        let bottom = self.d4.apply(tape, &f3)?; // 2w @ side/64

        let u = self.u1.apply(tape, &bottom)?; // 2w @ side/16
        let u = ops::concat_channels(tape, &u, &f3)?;
        let u = self.c1.apply(tape, &u)?; // 2w
        let u = self.u2.apply(tape, &u)?; // w @ side/8
        let u = ops::concat_channels(tape, &u, &f2)?;
        let u = self.c2.apply(tape, &u)?; // w
        let u = self.u3.apply(tape, &u)?; // w @ side/2
        let u = ops::concat_channels(tape, &u, &f1)?;
        let u = self.c3.apply(tape, &u)?; // w
        let u = self.u4.apply(tape, &u)?; // w @ side
        let u = self.c4.apply(tape, &u)?; // w
        Ok(ops::conv2d(tape, &u, &self.head_w, Some(&self.head_b), 1, 1)?)
    }

    pub fn params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        fn unit(
            out: &mut Vec<(String, Tensor)>,
            prefix: &str,
            name: &str,
            w: &Tensor,
            gamma: &Tensor,
            beta: &Tensor,
        ) {
            out.push((format!("{prefix}.{name}.weight"), w.clone()));
            out.push((format!("{prefix}.{name}.gamma"), gamma.clone()));
            out.push((format!("{prefix}.{name}.beta"), beta.clone()));
        }
        let mut out = Vec::new();
        unit(&mut out, prefix, "down1.conv1", &self.d1.w, &self.d1.gamma, &self.d1.beta);
        unit(&mut out, prefix, "down1.conv2", &self.d2.w, &self.d2.gamma, &self.d2.beta);
        unit(&mut out, prefix, "down2.conv1", &self.d3.w, &self.d3.gamma, &self.d3.beta);
        unit(&mut out, prefix, "down2.conv2", &self.d4.w, &self.d4.gamma, &self.d4.beta);
        unit(&mut out, prefix, "up1.tconv1", &self.u1.w, &self.u1.gamma, &self.u1.beta);
        unit(&mut out, prefix, "up1.conv1", &self.c1.w, &self.c1.gamma, &self.c1.beta);
        unit(&mut out, prefix, "up1.tconv2", &self.u2.w, &self.u2.gamma, &self.u2.beta);
        unit(&mut out, prefix, "up1.conv2", &self.c2.w, &self.c2.gamma, &self.c2.beta);
        unit(&mut out, prefix, "up2.tconv1", &self.u3.w, &self.u3.gamma, &self.u3.beta);
        unit(&mut out, prefix, "up2.conv1", &self.c3.w, &self.c3.gamma, &self.c3.beta);
        unit(&mut out, prefix, "up2.tconv2", &self.u4.w, &self.u4.gamma, &self.u4.beta);
        unit(&mut out, prefix, "up2.conv2", &self.c4.w, &self.c4.gamma, &self.c4.beta);
        out.push((format!("{prefix}.head.weight"), self.head_w.clone()));
        out.push((format!("{prefix}.head.bias"), self.head_b.clone()));
        out
    }
}

// ---- the full model ----------------------------------------------------------------

pub struct StegoNet {
    pub variant: ArchVariant,
    pub geometry: Geometry,
    pub hiding: UNet,
    pub reveal: UNet,
    /// ResScale gain; allocated for every variant so checkpoints are uniform.
    pub scale_w: Tensor,
}

impl StegoNet {
    pub fn new(variant: ArchVariant, geometry: Geometry, seed: u64) -> Result<StegoNet> {
        geometry.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hiding = UNet::new(&mut rng, variant.hiding_in_channels());
        let reveal = UNet::new(&mut rng, 1);
        let scale_w = Tensor::param(&[1], vec![0.01])?;
        Ok(StegoNet { variant, geometry, hiding, reveal, scale_w })
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.hiding.params("hiding");
        out.extend(self.reveal.params("reveal"));
        out.push(("scale.w".to_string(), self.scale_w.clone()));
        out
    }

    pub fn trainable(&self) -> Vec<Tensor> {
        self.params().into_iter().map(|(_, t)| t).collect()
    }

    /// Residual U-Net pass: shuffled image, plus a host summary channel for
    /// the cover-dependent variants.
    pub fn hiding_forward(
        &self,
        tape: &Tape,
        shuffled: &Tensor,
        host_summary: Option<&Tensor>,
    ) -> Result<Tensor> {
        let input = match (self.variant.is_cover_dependent(), host_summary) {
            (false, None) => shuffled.clone(),
            (true, Some(h)) => ops::concat_channels(tape, shuffled, h)?,
            (false, Some(_)) => {
                return Err(Error::Unsupported(format!(
                    "variant {} never reads the host in the hiding path",
                    self.variant
                )))
            }
            (true, None) => {
                return Err(Error::Unsupported(format!(
                    "variant {} requires a host summary",
                    self.variant
                )))
            }
        };
        self.hiding.forward(tape, &input)
    }

    /// Full transmitter pass for this variant. Returns the host constant (for
    /// the loss), the container coefficients, and the residual when the
    /// variant has one.
    pub fn variant_forward(
        &self,
        tape: &Tape,
        shuffled: &Tensor,
        host: &Spectrogram,
    ) -> Result<VariantForward> {
        self.geometry.matches_spectrogram(host)?;
        let host_t = Tensor::from_vec(&[host.bins(), host.frames()], host.values.clone())?;
        let (k_b, k_f) = (self.geometry.k_b, self.geometry.k_f);
        let side = self.geometry.shuffled_side();
        match self.variant {
            ArchVariant::ResIndep => {
                let residual = self.hiding_forward(tape, shuffled, None)?;
                let tiled = tile_op(tape, &residual, k_b, k_f)?;
                let container = ops::add(tape, &host_t, &tiled)?;
                Ok(VariantForward { host: host_t, container, residual: Some(residual) })
            }
            ArchVariant::ResDep => {
                let summary = tile_average_op(tape, &host_t, side)?;
                let residual = self.hiding_forward(tape, shuffled, Some(&summary))?;
                let tiled = tile_op(tape, &residual, k_b, k_f)?;
                let container = ops::add(tape, &host_t, &tiled)?;
                Ok(VariantForward { host: host_t, container, residual: Some(residual) })
            }
            ArchVariant::PlainDep => {
                let summary = tile_average_op(tape, &host_t, side)?;
                let encoded = self.hiding_forward(tape, shuffled, Some(&summary))?;
                let container = tile_op(tape, &encoded, k_b, k_f)?;
                Ok(VariantForward { host: host_t, container, residual: None })
            }
            ArchVariant::ResScale => {
                let residual = ops::scale_by(tape, shuffled, &self.scale_w)?;
                let tiled = tile_op(tape, &residual, k_b, k_f)?;
                let container = ops::add(tape, &host_t, &tiled)?;
                Ok(VariantForward { host: host_t, container, residual: Some(residual) })
            }
        }
    }

    /// Receiver pass down to the normalized (unclipped) RGB tensor.
    pub fn reveal_forward(&self, tape: &Tape, received: &Tensor) -> Result<Tensor> {
        let side = self.geometry.shuffled_side();
        let avg = tile_average_op(tape, received, side)?;
        let plane = self.reveal.forward(tape, &avg)?;
        let img4 = pixel_unshuffle_op(tape, &plane)?;
        Ok(ops::slice_channels(tape, &img4, 0, 3)?)
    }

    /// Reveal an image from a container spectrogram: tile-average, reveal
    /// net, un-shuffle, drop the zero channel, clip to [0,1], denormalize.
    pub fn reveal(&self, container: &Spectrogram) -> Result<Image> {
        self.geometry.matches_spectrogram(container)?;
        let tape = Tape::disabled();
        let received =
            Tensor::from_vec(&[container.bins(), container.frames()], container.values.clone())?;
        let rgb = self.reveal_forward(&tape, &received)?;
        tensor_to_image(&rgb)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let g = &self.geometry;
        let mut entries = self.params();
        let meta = [
            ("meta.variant", self.variant.code()),
            ("meta.image_side", g.image_side as f32),
            ("meta.k_b", g.k_b as f32),
            ("meta.k_f", g.k_f as f32),
            ("meta.hop", g.hop as f32),
            ("meta.clip_samples", g.clip_samples as f32),
            ("meta.sample_rate", g.sample_rate as f32),
        ];
        for (name, value) in meta {
            entries.push((name.to_string(), Tensor::scalar(value)));
        }
        save_checkpoint(path, &entries)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<StegoNet> {
        let entries = load_checkpoint(path)?;
        let lookup = |name: &str| -> Result<&wavestamp_tensor::CheckpointEntry> {
            entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::Format(format!("checkpoint missing entry '{name}'")))
        };
        let scalar = |name: &str| -> Result<f32> {
            let e = lookup(name)?;
            if e.data.len() != 1 {
                return Err(Error::Format(format!("'{name}' is not a scalar")));
            }
            Ok(e.data[0])
        };
        let variant = ArchVariant::from_code(scalar("meta.variant")?)?;
        let geometry = Geometry {
            image_side: scalar("meta.image_side")? as usize,
            k_b: scalar("meta.k_b")? as usize,
            k_f: scalar("meta.k_f")? as usize,
            hop: scalar("meta.hop")? as usize,
            clip_samples: scalar("meta.clip_samples")? as usize,
            sample_rate: scalar("meta.sample_rate")? as u32,
        };
        let net = StegoNet::new(variant, geometry, 0)?;
        for (name, tensor) in net.params() {
            let entry = lookup(&name)?;
            if entry.shape != tensor.shape() {
                return Err(Error::Format(format!(
                    "checkpoint entry '{name}' has shape {:?}, expected {:?}",
                    entry.shape,
                    tensor.shape()
                )));
            }
            tensor.set_data(&entry.data).map_err(Error::from)?;
        }
        Ok(net)
    }
}

pub struct VariantForward {
    pub host: Tensor,
    pub container: Tensor,
    pub residual: Option<Tensor>,
}

// ---- image <-> tensor helpers --------------------------------------------------------

/// Image to a [1, 3, S, S] tensor in [0, 1].
pub fn image_to_tensor(img: &Image) -> Result<Tensor> {
    let (w, h) = (img.width, img.height);
    let mut data = vec![0.0f32; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let px = img.rgb(x, y);
            for c in 0..3 {
                data[c * w * h + y * w + x] = px[c] as f32 / 255.0;
            }
        }
    }
    Ok(Tensor::from_vec(&[1, 3, h, w], data)?)
}

/// Image to the shuffled [1, 1, 2S, 2S] plane (appending the zero channel).
pub fn image_to_shuffled(tape: &Tape, img: &Image) -> Result<Tensor> {
    if img.width != img.height {
        return Err(Error::Dimension("expected a square image".into()));
    }
    let s = img.width;
    let rgb = image_to_tensor(img)?;
    let mut with_zero = rgb.to_vec();
    with_zero.extend(std::iter::repeat_n(0.0, s * s));
    let img4 = Tensor::from_vec(&[1, 4, s, s], with_zero)?;
    pixel_shuffle_op(tape, &img4)
}

/// Clip a normalized [1, 3, S, S] tensor to [0,1] and denormalize to RGB8.
pub fn tensor_to_image(t: &Tensor) -> Result<Image> {
    let shape = t.shape();
    if shape.len() != 4 || shape[0] != 1 || shape[1] != 3 {
        return Err(Error::Dimension(format!("expected [1,3,S,S], got {shape:?}")));
    }
    let (h, w) = (shape[2], shape[3]);
    let data = t.data();
    let mut pixels = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = data[c * w * h + y * w + x].clamp(0.0, 1.0);
                pixels[(y * w + x) * 3 + c] = (v * 255.0).round() as u8;
            }
        }
    }
    Image::new(w, h, pixels)
}

// ---- stamps --------------------------------------------------------------------------

/// Host-independent encoded image residual plus its tiling geometry.
#[derive(Debug, Clone)]
pub struct Stamp {
    /// side x side residual (side = 2S).
    pub residual: Vec<f32>,
    pub side: usize,
    pub k_b: usize,
    pub k_f: usize,
    /// SHA-256 of the checkpoint that produced it.
    pub checkpoint_digest: [u8; 32],
}

/// Encode an image into a stamp without reading any host audio. Rejects
/// cover-dependent variants, whose encodings cannot be precomputed.
pub fn encode_stamp(net: &StegoNet, img: &Image, checkpoint_digest: [u8; 32]) -> Result<Stamp> {
    if net.variant.is_cover_dependent() {
        return Err(Error::Unsupported(format!(
            "cover-dependent variant {} cannot precompute stamps",
            net.variant
        )));
    }
    let side = net.geometry.shuffled_side();
    if img.width != net.geometry.image_side || img.height != net.geometry.image_side {
        return Err(Error::Dimension(format!(
            "image {}x{} does not match geometry side {}",
            img.width, img.height, net.geometry.image_side
        )));
    }
    let tape = Tape::disabled();
    let shuffled = image_to_shuffled(&tape, img)?;
    let residual = match net.variant {
        ArchVariant::ResIndep => net.hiding_forward(&tape, &shuffled, None)?,
        ArchVariant::ResScale => ops::scale_by(&tape, &shuffled, &net.scale_w)?,
        _ => unreachable!(),
    };
    Ok(Stamp {
        residual: residual.to_vec(),
        side,
        k_b: net.geometry.k_b,
        k_f: net.geometry.k_f,
        checkpoint_digest,
    })
}

/// container[b, f] = host[b, f] + residual[b mod side, f mod side].
pub fn embed(stamp: &Stamp, host: &Spectrogram) -> Result<Spectrogram> {
    let (bins, frames) = (stamp.k_b * stamp.side, stamp.k_f * stamp.side);
    if host.bins() != bins || host.frames() != frames {
        return Err(Error::Geometry(format!(
            "host spectrogram {}x{} does not match stamp geometry {}x{}",
            host.bins(),
            host.frames(),
            bins,
            frames
        )));
    }
    let tiled = tile(&stamp.residual, stamp.side, stamp.k_b, stamp.k_f);
    let mut out = host.clone();
    for (v, t) in out.values.iter_mut().zip(&tiled) {
        *v += t;
    }
    Ok(out)
}

const STAMP_MAGIC: &[u8; 4] = b"PXWR";
const STAMP_VERSION: u32 = 1;

pub fn save_stamp<P: AsRef<Path>>(path: P, stamp: &Stamp) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(STAMP_MAGIC)?;
    w.write_all(&STAMP_VERSION.to_le_bytes())?;
    w.write_all(&(stamp.side as u32).to_le_bytes())?;
    w.write_all(&(stamp.k_b as u32).to_le_bytes())?;
    w.write_all(&(stamp.k_f as u32).to_le_bytes())?;
    w.write_all(&stamp.checkpoint_digest)?;
    for &v in &stamp.residual {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_stamp<P: AsRef<Path>>(path: P) -> Result<Stamp> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STAMP_MAGIC {
        return Err(Error::Format(format!("bad stamp magic {magic:?}")));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != STAMP_VERSION {
        return Err(Error::Format(format!("unsupported stamp version {version}")));
    }
    r.read_exact(&mut buf4)?;
    let side = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let k_b = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let k_f = u32::from_le_bytes(buf4) as usize;
    let mut checkpoint_digest = [0u8; 32];
    r.read_exact(&mut checkpoint_digest)?;
    let mut residual = vec![0.0f32; side * side];
    for v in residual.iter_mut() {
        r.read_exact(&mut buf4)?;
        *v = f32::from_le_bytes(buf4);
    }
    Ok(Stamp { residual, side, k_b, k_f, checkpoint_digest })
}

/// SHA-256 of a file's bytes (stamps record which checkpoint made them).
pub fn file_digest<P: AsRef<Path>>(path: P) -> Result<[u8; 32]> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher.finalize().into())
}
