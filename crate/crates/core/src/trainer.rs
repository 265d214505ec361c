//! End-to-end training, evaluation sweeps, and the capacity report.
//!
//! One training iteration: load a pair, normalize and shuffle the image, run
//! the variant's transmitter to a container spectrogram, synthesize the
//! container waveform, push it through the (seeded, per-iteration) training
//! channel, re-analyze at the receiver, reveal, take the total loss,
//! backprop, and apply one Adam step. Every logged number is a pure function
//! of (config, corpus).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wavestamp_tensor::{Adam, Tape};

use crate::channel::{apply_noise, apply_noise_op, NoiseKind, NoiseSpec};
use crate::dsp::{istdct, istdct_op, stdct, stdct_op, Spectrogram, Waveform};
use crate::error::{Error, Result};
use crate::io::{load_pair, pairs_for_epoch, DatasetSpec, Image};
use crate::losses::{total_loss, LossWeights};
use crate::metrics::{psnr, snr_db, ssim, Db, MetricsReport, PairMetrics};
use crate::model::{
    image_to_shuffled, image_to_tensor, tensor_to_image, ArchVariant, Geometry, StegoNet,
};

pub const LOG_HEADER: &str = "iteration,total_loss,image_mae,audio_mse,dtw_term,snr_db,ssim";

/// Everything needed to reproduce a run. Flat, so the JSON config file
/// mirrors the field names one-to-one.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: ArchVariant,
    pub image_side: usize,
    pub k_b: usize,
    pub k_f: usize,
    pub hop: usize,
    pub clip_samples: usize,
    pub sample_rate: u32,
    pub beta: f32,
    pub lambda: f32,
    pub gamma: f32,
    pub lr: f32,
    pub batch: usize,
    pub iterations: usize,
    pub noise_kind: NoiseKind,
    pub noise_sigma: f32,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub dtw_decimation: usize,
    pub log_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub image_dir: PathBuf,
    pub audio_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        let g = Geometry::desk();
        TrainConfig {
            variant: ArchVariant::ResIndep,
            image_side: g.image_side,
            k_b: g.k_b,
            k_f: g.k_f,
            hop: g.hop,
            clip_samples: g.clip_samples,
            sample_rate: g.sample_rate,
            beta: 0.5,
            lambda: 1e-4,
            gamma: 1.0,
            lr: 0.01,
            batch: 1,
            iterations: 2000,
            noise_kind: NoiseKind::None,
            noise_sigma: 0.0,
            seed: 42,
            checkpoint_every: 500,
            dtw_decimation: 32,
            log_path: PathBuf::from("train_log.csv"),
            checkpoint_path: PathBuf::from("model.pxwc"),
            image_dir: PathBuf::from("corpus/images"),
            audio_dir: PathBuf::from("corpus/audio"),
        }
    }
}

impl TrainConfig {
    pub fn geometry(&self) -> Geometry {
        Geometry {
            image_side: self.image_side,
            k_b: self.k_b,
            k_f: self.k_f,
            hop: self.hop,
            clip_samples: self.clip_samples,
            sample_rate: self.sample_rate,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { beta: self.beta, lambda: self.lambda, gamma: self.gamma }
    }

    pub fn dataset(&self) -> DatasetSpec {
        DatasetSpec {
            image_dir: self.image_dir.clone(),
            audio_dir: self.audio_dir.clone(),
            image_side: self.image_side,
            clip_samples: self.clip_samples,
            pairing_seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        self.weights().validate()?;
        if self.batch != 1 {
            return Err(Error::Config("only batch size 1 is supported".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("lr must be > 0".into()));
        }
        if self.dtw_decimation == 0 {
            return Err(Error::Config("dtw_decimation must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepStats {
    pub total: f32,
    pub image_mae: f32,
    pub audio_mse: f32,
    pub dtw_term: f32,
    pub snr_db: Db,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub first_loss: f32,
    pub final_loss: f32,
    pub iterations: usize,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

/// One optimizer step over a single (image, host clip) pair. Backward has
/// already run when this returns; the caller applies the Adam update.
fn train_step(
    net: &StegoNet,
    config: &TrainConfig,
    image: &Image,
    host_wave: &Waveform,
    iteration: u64,
) -> Result<StepStats> {
    let spec = net.geometry.frame_spec();
    let tape = Tape::new();
    let shuffled = image_to_shuffled(&tape, image)?;
    let host_spect = stdct(host_wave, &spec)?;
    let fwd = net.variant_forward(&tape, &shuffled, &host_spect)?;
    let cont_wave = istdct_op(&tape, &fwd.container, &spec, &host_spect.tail)?;
    let noise = NoiseSpec {
        kind: config.noise_kind,
        sigma: config.noise_sigma,
        seed: config.seed.wrapping_add(iteration),
    };
    let received_wave = apply_noise_op(&tape, &cont_wave, &noise)?;
    let received = stdct_op(&tape, &received_wave, &spec)?;
    let s_rev = net.reveal_forward(&tape, &received)?;
    let s = image_to_tensor(image)?;
    let loss = total_loss(
        &tape,
        &s,
        &s_rev,
        &fwd.host,
        &fwd.container,
        &host_wave.samples,
        &cont_wave,
        &config.weights(),
        config.dtw_decimation,
    )?;
    tape.backward(&loss.total)?;

    let container_wave = Waveform::new(cont_wave.to_vec(), host_wave.sample_rate);
    let snr = snr_db(host_wave, &container_wave)?;
    let revealed = tensor_to_image(&s_rev)?;
    let ssim_v = ssim(image, &revealed)?;
    Ok(StepStats {
        total: loss.total.item(),
        image_mae: loss.image_mae,
        audio_mse: loss.audio_mse,
        dtw_term: loss.dtw_term,
        snr_db: snr,
        ssim: ssim_v,
    })
}

pub fn train(config: &TrainConfig) -> Result<TrainSummary> {
    config.validate()?;
    let geometry = config.geometry();
    let net = StegoNet::new(config.variant, geometry, config.seed)?;
    let mut adam = Adam::new(net.trainable(), config.lr);
    let dataset = config.dataset();

    if let Some(parent) = config.log_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut log = BufWriter::new(File::create(&config.log_path)?);
    writeln!(log, "# config {}", serde_json::to_string(config).map_err(|e| Error::Config(e.to_string()))?)?;
    writeln!(log, "{LOG_HEADER}")?;

    let mut epoch = 0u64;
    let mut pairs = pairs_for_epoch(&dataset, epoch)?;
    let mut pair_idx = 0usize;
    let mut first_loss = None;
    let mut final_loss = 0.0f32;
    let mut high_streak = 0usize;

    for iteration in 1..=config.iterations {
        if pair_idx == pairs.len() {
            epoch += 1;
            pairs = pairs_for_epoch(&dataset, epoch)?;
            pair_idx = 0;
        }
        let pairing = pairs[pair_idx].clone();
        pair_idx += 1;
        let (image, host_wave) = load_pair(&dataset, &pairing)?;
        let stats = train_step(&net, config, &image, &host_wave, iteration as u64).map_err(|e| {
            Error::Training(format!(
                "iteration {iteration} aborted ({e}); image={}, clip={}, host peak={:.4}",
                pairing.image.display(),
                pairing.clip.display(),
                host_wave.samples.iter().fold(0.0f32, |m, &v| m.max(v.abs())),
            ))
        })?;
        adam.step().map_err(|e| {
            Error::Training(format!("iteration {iteration}: optimizer rejected update ({e})"))
        })?;
        adam.zero_grads();

        writeln!(
            log,
            "{iteration},{:.7e},{:.7e},{:.7e},{:.7e},{},{:.6}",
            stats.total, stats.image_mae, stats.audio_mse, stats.dtw_term, stats.snr_db, stats.ssim
        )?;

        let first = *first_loss.get_or_insert(stats.total);
        final_loss = stats.total;
        if stats.total > 10.0 * first {
            high_streak += 1;
            if high_streak >= 100 {
                return Err(Error::Training(format!(
                    "diverged: loss {final_loss} above 10x initial {first} for 100 consecutive iterations (at iteration {iteration})"
                )));
            }
        } else {
            high_streak = 0;
        }

        if config.checkpoint_every > 0
            && iteration % config.checkpoint_every == 0
            && iteration != config.iterations
        {
            net.save(&config.checkpoint_path)?;
        }
    }
    log.flush()?;
    net.save(&config.checkpoint_path)?;
    Ok(TrainSummary {
        first_loss: first_loss.unwrap_or(0.0),
        final_loss,
        iterations: config.iterations,
        checkpoint_path: config.checkpoint_path.clone(),
        log_path: config.log_path.clone(),
    })
}

// ---- evaluation ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalCell {
    pub kind: NoiseKind,
    pub sigma: f32,
    pub report: MetricsReport,
}

/// Run the full encode -> embed -> channel -> reveal pipeline over the
/// evaluation set for every (kind, sigma) grid cell. Read-only on the
/// checkpoint; SNR measures the embedding distortion (host vs clean
/// container), SSIM/PSNR the image recovered after the noisy channel.
pub fn evaluate<P: AsRef<Path>>(
    checkpoint: P,
    image_dir: &Path,
    audio_dir: &Path,
    grid: &[(NoiseKind, f32)],
    seed: u64,
) -> Result<Vec<EvalCell>> {
    let net = StegoNet::load(checkpoint)?;
    let g = net.geometry;
    let dataset = DatasetSpec {
        image_dir: image_dir.to_path_buf(),
        audio_dir: audio_dir.to_path_buf(),
        image_side: g.image_side,
        clip_samples: g.clip_samples,
        pairing_seed: seed,
    };
    let spec = g.frame_spec();
    let pairs = pairs_for_epoch(&dataset, 0)?;
    let mut cells = Vec::with_capacity(grid.len());
    for (cell_idx, &(kind, sigma)) in grid.iter().enumerate() {
        let mut pair_metrics = Vec::with_capacity(pairs.len());
        for (pair_idx, pairing) in pairs.iter().enumerate() {
            let (image, host_wave) = load_pair(&dataset, pairing)?;
            let tape = Tape::disabled();
            let shuffled = image_to_shuffled(&tape, &image)?;
            let host_spect = stdct(&host_wave, &spec)?;
            let fwd = net.variant_forward(&tape, &shuffled, &host_spect)?;
            let container = Spectrogram {
                values: fwd.container.to_vec(),
                spec,
                source_len: host_spect.source_len,
                sample_rate: host_spect.sample_rate,
                tail: host_spect.tail.clone(),
            };
            let cont_wave = istdct(&container)?;
            let snr = snr_db(&host_wave, &cont_wave)?;
            let noise = NoiseSpec {
                kind,
                sigma,
                seed: seed
                    ^ (cell_idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    ^ (pair_idx as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9),
            };
            let received_wave = apply_noise(&cont_wave, &noise)?;
            let received = stdct(&received_wave, &spec)?;
            let revealed = net.reveal(&received)?;
            pair_metrics.push(PairMetrics {
                snr_db: snr,
                ssim: ssim(&image, &revealed)?,
                psnr_db: psnr(&image, &revealed)?,
            });
        }
        cells.push(EvalCell { kind, sigma, report: MetricsReport::from_pairs(pair_metrics) });
    }
    Ok(cells)
}

// ---- beta sweep ------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BetaPoint {
    pub beta: f32,
    pub snr_db: Db,
    pub ssim: f64,
}

/// Train one model per beta from the same seed, evaluate noise-free on the
/// training corpus, and optionally write a (beta, snr_db, ssim) CSV.
pub fn beta_sweep(
    base: &TrainConfig,
    betas: &[f32],
    out_csv: Option<&Path>,
) -> Result<Vec<BetaPoint>> {
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut config = base.clone();
        config.beta = beta;
        let tag = format!("{beta:.4}");
        config.log_path = suffixed(&base.log_path, &tag);
        config.checkpoint_path = suffixed(&base.checkpoint_path, &tag);
        train(&config)?;
        let cells = evaluate(
            &config.checkpoint_path,
            &config.image_dir,
            &config.audio_dir,
            &[(NoiseKind::None, 0.0)],
            config.seed,
        )?;
        let report = &cells[0].report;
        points.push(BetaPoint { beta, snr_db: report.audio_snr_db, ssim: report.image_ssim });
    }
    if let Some(path) = out_csv {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "beta,snr_db,ssim")?;
        for p in &points {
            writeln!(f, "{},{},{:.6}", p.beta, p.snr_db, p.ssim)?;
        }
        f.flush()?;
    }
    Ok(points)
}

fn suffixed(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("");
    let name = if ext.is_empty() {
        format!("{stem}-{tag}")
    } else {
        format!("{stem}-{tag}.{ext}")
    };
    path.with_file_name(name)
}

// ---- capacity ---------------------------------------------------------------------

/// Payload bits per second of host audio:
/// (S * S * 3 * 8) / (clip_samples / sample_rate).
pub fn capacity_bps(image_side: usize, clip_samples: usize, sample_rate: u32) -> f64 {
    let bits = (image_side * image_side * 3 * 8) as f64;
    let seconds = clip_samples as f64 / sample_rate as f64;
    bits / seconds
}
