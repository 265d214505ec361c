//! wavestamp: hide an RGB image inside audio as an additive spectrogram
//! stamp, transmit, and reveal it with a trained decoder.
//!
//! The full lifecycle is exposed as subcommands: gen-corpus, train, encode
//! (image -> stamp, no audio involved), embed (stamp + host -> container
//! WAV), decode (container -> image), evaluate, beta-sweep, capacity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavestamp_core::channel::NoiseKind;
use wavestamp_core::dsp::{istdct, stdct, FrameSpec};
use wavestamp_core::io::{
    generate_corpus, read_image, read_wav, write_ppm, write_wav, WavEncoding,
};
use wavestamp_core::metrics::snr_db;
use wavestamp_core::model::{
    embed, encode_stamp, file_digest, load_stamp, save_stamp, StegoNet,
};
use wavestamp_core::trainer::{beta_sweep, capacity_bps, evaluate, train, TrainConfig};
use wavestamp_core::{Error, Result};

#[derive(Parser)]
#[command(name = "wavestamp", version, about = "Hide images in audio as precomputable spectrogram stamps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image/audio corpus for desk-scale runs.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        images: usize,
        #[arg(long, default_value_t = 4)]
        clips: usize,
        #[arg(long, default_value_t = 64)]
        image_side: usize,
        #[arg(long, default_value_t = 8192)]
        clip_samples: usize,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train a model; flags override values from --config.
    Train {
        /// Flat JSON document mirroring the training config fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        beta: Option<f32>,
        #[arg(long)]
        lambda: Option<f32>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        lr: Option<f32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<String>,
        #[arg(long)]
        sigma: Option<f32>,
        #[arg(long)]
        image_dir: Option<PathBuf>,
        #[arg(long)]
        audio_dir: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Encode an image into a host-independent stamp file (no audio is read).
    Encode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_stamp: PathBuf,
    },
    /// Add a stamp to a host WAV and write the container WAV.
    Embed {
        #[arg(long)]
        stamp: PathBuf,
        #[arg(long)]
        host_wav: PathBuf,
        #[arg(long)]
        out_wav: PathBuf,
        /// Analysis hop in samples (must match the checkpoint's training hop).
        #[arg(long, default_value_t = 63)]
        hop: usize,
        /// Quantize the container to PCM16 instead of float32.
        #[arg(long, default_value_t = false)]
        pcm16: bool,
    },
    /// Reveal the hidden image from a container WAV (blind: no host needed).
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        container_wav: PathBuf,
        #[arg(long)]
        out_image: PathBuf,
        /// Optional host for SNR reporting only.
        #[arg(long)]
        host_wav: Option<PathBuf>,
    },
    /// Run the encode/embed/channel/reveal pipeline over a noise grid.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image_dir: PathBuf,
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long, default_value = "none")]
        noise: String,
        /// Comma-separated sigma ladder, e.g. 0.1,0.5,0.75,0.9
        #[arg(long, default_value = "0")]
        sigmas: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per beta from one seed and tabulate the trade-off.
    BetaSweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated beta values in [0, 1].
        #[arg(long)]
        betas: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        image_dir: Option<PathBuf>,
        #[arg(long)]
        audio_dir: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Payload bits per second for a geometry.
    Capacity {
        #[arg(long, default_value_t = 64)]
        image_side: usize,
        #[arg(long, default_value_t = 8192)]
        clip_samples: usize,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn parse_sigmas(s: &str) -> Result<Vec<f32>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f32>()
                .map_err(|_| Error::Config(format!("bad sigma value '{v}'")))
        })
        .collect()
}

fn parse_noise(s: &str) -> Result<NoiseKind> {
    match s {
        "none" => Ok(NoiseKind::None),
        "awgn" => Ok(NoiseKind::Awgn),
        "speckle" => Ok(NoiseKind::Speckle),
        other => Err(Error::Config(format!(
            "unknown noise kind '{other}' (none, awgn or speckle)"
        ))),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenCorpus {
            out,
            images,
            clips,
            image_side,
            clip_samples,
            sample_rate,
            seed,
        } => {
            generate_corpus(&out, images, clips, image_side, clip_samples, sample_rate, seed)?;
            println!(
                "wrote {images} images and {clips} clips under {}",
                out.display()
            );
            Ok(())
        }

        Command::Train {
            config,
            variant,
            beta,
            lambda,
            iterations,
            lr,
            seed,
            noise,
            sigma,
            image_dir,
            audio_dir,
            log,
            checkpoint,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(v) = variant {
                cfg.variant = v.parse()?;
            }
            if let Some(v) = beta {
                cfg.beta = v;
            }
            if let Some(v) = lambda {
                cfg.lambda = v;
            }
            if let Some(v) = iterations {
                cfg.iterations = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = noise {
                cfg.noise_kind = parse_noise(&v)?;
            }
            if let Some(v) = sigma {
                cfg.noise_sigma = v;
            }
            if let Some(v) = image_dir {
                cfg.image_dir = v;
            }
            if let Some(v) = audio_dir {
                cfg.audio_dir = v;
            }
            if let Some(v) = log {
                cfg.log_path = v;
            }
            if let Some(v) = checkpoint {
                cfg.checkpoint_path = v;
            }
            let summary = train(&cfg)?;
            println!(
                "trained {} iterations: loss {:.6} -> {:.6}; checkpoint {}, log {}",
                summary.iterations,
                summary.first_loss,
                summary.final_loss,
                summary.checkpoint_path.display(),
                summary.log_path.display()
            );
            Ok(())
        }

        Command::Encode { checkpoint, image, out_stamp } => {
            let net = StegoNet::load(&checkpoint)?;
            let img = read_image(&image, net.geometry.image_side)?;
            let digest = file_digest(&checkpoint)?;
            let stamp = encode_stamp(&net, &img, digest)?;
            save_stamp(&out_stamp, &stamp)?;
            println!(
                "stamp {}x{} (tiling {}x{}) written to {}",
                stamp.side,
                stamp.side,
                stamp.k_b,
                stamp.k_f,
                out_stamp.display()
            );
            Ok(())
        }

        Command::Embed { stamp, host_wav, out_wav, hop, pcm16 } => {
            let stamp = load_stamp(&stamp)?;
            let host = read_wav(&host_wav)?;
            let spec = FrameSpec::new(stamp.k_b * stamp.side, hop, stamp.k_f * stamp.side)?;
            if host.len() < spec.covered() {
                return Err(Error::Dimension(format!(
                    "host has {} samples; this stamp geometry needs at least {}",
                    host.len(),
                    spec.covered()
                )));
            }
            let host_spect = stdct(&host, &spec)?;
            let container_spect = embed(&stamp, &host_spect)?;
            let container = istdct(&container_spect)?;
            let encoding = if pcm16 { WavEncoding::Pcm16 } else { WavEncoding::Float32 };
            write_wav(&out_wav, &container, encoding)?;
            eprintln!("embed SNR: {} dB", snr_db(&host, &container)?);
            println!("container written to {}", out_wav.display());
            Ok(())
        }

        Command::Decode { checkpoint, container_wav, out_image, host_wav } => {
            let net = StegoNet::load(&checkpoint)?;
            let container = read_wav(&container_wav)?;
            let spec = net.geometry.frame_spec();
            if container.len() < spec.covered() {
                return Err(Error::Dimension(format!(
                    "container has {} samples; this checkpoint's geometry needs at least {}",
                    container.len(),
                    spec.covered()
                )));
            }
            let received = stdct(&container, &spec)?;
            let img = net.reveal(&received)?;
            write_ppm(&out_image, &img)?;
            if let Some(host_path) = host_wav {
                let host = read_wav(&host_path)?;
                if host.len() == container.len() {
                    eprintln!("host/container SNR: {} dB", snr_db(&host, &container)?);
                } else {
                    eprintln!("host/container SNR: skipped (length mismatch)");
                }
            }
            println!("revealed image written to {}", out_image.display());
            Ok(())
        }

        Command::Evaluate {
            checkpoint,
            image_dir,
            audio_dir,
            noise,
            sigmas,
            seed,
            out,
        } => {
            let kind = parse_noise(&noise)?;
            let sigmas = parse_sigmas(&sigmas)?;
            let grid: Vec<(NoiseKind, f32)> = sigmas.iter().map(|&s| (kind, s)).collect();
            let cells = evaluate(&checkpoint, &image_dir, &audio_dir, &grid, seed)?;
            let mut csv = String::from("noise,sigma,snr_db,ssim,psnr_db\n");
            for cell in &cells {
                csv.push_str(&format!(
                    "{},{},{},{:.6},{}\n",
                    cell.kind,
                    cell.sigma,
                    cell.report.audio_snr_db,
                    cell.report.image_ssim,
                    cell.report.image_psnr_db
                ));
            }
            print!("{csv}");
            if let Some(path) = out {
                std::fs::write(&path, csv)?;
            }
            Ok(())
        }

        Command::BetaSweep {
            config,
            betas,
            out,
            image_dir,
            audio_dir,
            log,
            checkpoint,
            iterations,
            seed,
        } => {
            let mut base = load_config(&config)?;
            if let Some(v) = image_dir {
                base.image_dir = v;
            }
            if let Some(v) = audio_dir {
                base.audio_dir = v;
            }
            if let Some(v) = log {
                base.log_path = v;
            }
            if let Some(v) = checkpoint {
                base.checkpoint_path = v;
            }
            if let Some(v) = iterations {
                base.iterations = v;
            }
            if let Some(v) = seed {
                base.seed = v;
            }
            let betas = parse_sigmas(&betas)?;
            let points = beta_sweep(&base, &betas, out.as_deref())?;
            println!("beta,snr_db,ssim");
            for p in &points {
                println!("{},{},{:.6}", p.beta, p.snr_db, p.ssim);
            }
            Ok(())
        }

        Command::Capacity { image_side, clip_samples, sample_rate } => {
            let bps = capacity_bps(image_side, clip_samples, sample_rate);
            println!(
                "{} Kbps ({bps:.0} bits/s over {:.4} s per clip)",
                (bps / 1000.0).round() as i64,
                clip_samples as f64 / sample_rate as f64
            );
            Ok(())
        }
    }
}
