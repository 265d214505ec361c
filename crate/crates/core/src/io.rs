//! File I/O and dataset tooling: mono WAV (PCM16 / IEEE float32), PPM P6
//! images, deterministic image/clip pairing, and the synthetic corpus
//! generator used for desk-scale runs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

// ---- images -------------------------------------------------------------------

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Image> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "image buffer {} does not match {width}x{height}x3",
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Read a PPM P6 (8-bit) file.
pub fn read_ppm<P: AsRef<Path>>(path: P) -> Result<Image> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(&path)?).read_to_end(&mut bytes)?;
    parse_ppm(&bytes)
}

fn parse_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Format("not a PPM P6 file".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PPM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format("malformed PPM header".into()))?;
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported PPM bit depth (maxval {maxval}, expected 255)"
        )));
    }
    pos += 1; // exactly one whitespace byte after maxval
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(Error::Format("truncated PPM payload".into()));
    }
    Image::new(width, height, bytes[pos..pos + need].to_vec())
}

pub fn write_ppm<P: AsRef<Path>>(path: P, img: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.pixels)?;
    w.flush()?;
    Ok(())
}

/// Center-crop to a square, then nearest-neighbor resize to side x side.
pub fn crop_resize(img: &Image, side: usize) -> Image {
    let sq = img.width.min(img.height);
    let x0 = (img.width - sq) / 2;
    let y0 = (img.height - sq) / 2;
    let mut pixels = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        let sy = y0 + y * sq / side;
        for x in 0..side {
            let sx = x0 + x * sq / side;
            pixels.extend_from_slice(&img.rgb(sx, sy));
        }
    }
    Image { width: side, height: side, pixels }
}

/// Load an image and normalize it to side x side through crop/resize.
pub fn read_image<P: AsRef<Path>>(path: P, side: usize) -> Result<Image> {
    let img = read_ppm(path)?;
    if img.width == side && img.height == side {
        return Ok(img);
    }
    Ok(crop_resize(&img, side))
}

// ---- WAV ----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

pub fn read_wav<P: AsRef<Path>>(path: P) -> Result<Waveform> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(&path)?).read_to_end(&mut bytes)?;
    parse_wav(&bytes)
}

fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None; // (codec, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(Error::Format("truncated WAV chunk".into()));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                format = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1); // chunks are word-aligned
    }
    let (codec, channels, rate, bits) =
        format.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if channels != 1 {
        return Err(Error::Unsupported(format!(
            "only mono WAV is supported, file has {channels} channels"
        )));
    }
    let samples = match (codec, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        _ => {
            return Err(Error::Unsupported(format!(
                "unsupported WAV codec {codec} / {bits} bits (PCM16 or IEEE float32 only)"
            )))
        }
    };
    Ok(Waveform::new(samples, rate))
}

pub fn write_wav<P: AsRef<Path>>(path: P, w: &Waveform, encoding: WavEncoding) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let (codec, bits): (u16, u16) = match encoding {
        WavEncoding::Pcm16 => (1, 16),
        WavEncoding::Float32 => (3, 32),
    };
    let bytes_per_sample = bits as u32 / 8;
    let data_len = w.len() as u32 * bytes_per_sample;
    out.write_all(b"RIFF")?;
    out.write_all(&(36 + data_len).to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&codec.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?;
    out.write_all(&w.sample_rate.to_le_bytes())?;
    out.write_all(&(w.sample_rate * bytes_per_sample).to_le_bytes())?;
    out.write_all(&(bytes_per_sample as u16).to_le_bytes())?;
    out.write_all(&bits.to_le_bytes())?;
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    match encoding {
        WavEncoding::Pcm16 => {
            for &s in &w.samples {
                let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.write_all(&q.to_le_bytes())?;
            }
        }
        WavEncoding::Float32 => {
            for &s in &w.samples {
                out.write_all(&s.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

// ---- dataset pairing ------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub image_dir: PathBuf,
    pub audio_dir: PathBuf,
    pub image_side: usize,
    pub clip_samples: usize,
    pub pairing_seed: u64,
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().map(|e| e == ext).unwrap_or(false) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Config(format!("no .{ext} files in {}", dir.display())));
    }
    Ok(out)
}

/// One epoch of deterministic (image, clip segment) assignments.
#[derive(Debug, Clone)]
pub struct Pairing {
    pub image: PathBuf,
    pub clip: PathBuf,
    pub clip_offset: usize,
}

/// Shuffle the images by (seed, epoch) and give each an independently drawn
/// clip and start offset. Epoch length equals the image count.
pub fn pairs_for_epoch(spec: &DatasetSpec, epoch: u64) -> Result<Vec<Pairing>> {
    let images = sorted_files(&spec.image_dir, "ppm")?;
    let clips = sorted_files(&spec.audio_dir, "wav")?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.pairing_seed.wrapping_add(
        epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15),
    ));
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut rng);
    let mut out = Vec::with_capacity(images.len());
    for idx in order {
        let clip = clips[rng.random_range(0..clips.len())].clone();
        // offsets are drawn lazily against clip length at load time; draw the
        // raw random number now so the sequence is fixed by (seed, epoch)
        let offset_draw = rng.random::<u64>();
        out.push(Pairing {
            image: images[idx].clone(),
            clip,
            clip_offset: offset_draw as usize,
        });
    }
    Ok(out)
}

/// Load one pairing: the image at the dataset side and `clip_samples` of
/// audio starting at the (length-reduced) random offset.
pub fn load_pair(spec: &DatasetSpec, pairing: &Pairing) -> Result<(Image, Waveform)> {
    let image = read_image(&pairing.image, spec.image_side)?;
    let clip = read_wav(&pairing.clip)?;
    if clip.len() < spec.clip_samples {
        return Err(Error::Dimension(format!(
            "clip {} has {} samples, need {}",
            pairing.clip.display(),
            clip.len(),
            spec.clip_samples
        )));
    }
    let slack = clip.len() - spec.clip_samples;
    let offset = if slack == 0 { 0 } else { pairing.clip_offset % (slack + 1) };
    let samples = clip.samples[offset..offset + spec.clip_samples].to_vec();
    Ok((image, Waveform::new(samples, clip.sample_rate)))
}

// ---- synthetic corpus ------------------------------------------------------------

/// Write `n_images` PPM patterns and `n_clips` WAV clips sized for the given
/// geometry. Deterministic per seed, clip peak amplitude kept at <= 0.9.
pub fn generate_corpus<P: AsRef<Path>>(
    out_dir: P,
    n_images: usize,
    n_clips: usize,
    image_side: usize,
    clip_samples: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<()> {
    let out_dir = out_dir.as_ref();
    let image_dir = out_dir.join("images");
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&image_dir)?;
    std::fs::create_dir_all(&audio_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_images {
        let img = synth_image(image_side, i, &mut rng);
        write_ppm(image_dir.join(format!("img_{i:03}.ppm")), &img)?;
    }
    for i in 0..n_clips {
        let clip = synth_clip(clip_samples, sample_rate, &mut rng);
        write_wav(
            audio_dir.join(format!("clip_{i:03}.wav")),
            &clip,
            WavEncoding::Float32,
        )?;
    }
    Ok(())
}

fn synth_image(side: usize, index: usize, rng: &mut ChaCha8Rng) -> Image {
    let c1: [u8; 3] = [rng.random(), rng.random(), rng.random()];
    let c2: [u8; 3] = [rng.random(), rng.random(), rng.random()];
    let c3: [u8; 3] = [rng.random(), rng.random(), rng.random()];
    let cell = side / rng.random_range(4..9);
    let cx = rng.random_range(0..side) as f64;
    let cy = rng.random_range(0..side) as f64;
    let radius = side as f64 * rng.random_range(0.15..0.4);
    let mut pixels = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let px = match index % 4 {
                // diagonal gradient between two colors
                0 => {
                    let t = (x + y) as f64 / (2 * side - 2) as f64;
                    blend(c1, c2, t)
                }
                // checkerboard
                1 => {
                    if (x / cell.max(1) + y / cell.max(1)).is_multiple_of(2) {
                        c1
                    } else {
                        c2
                    }
                }
                // filled circle over a gradient
                2 => {
                    let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    if d < radius {
                        c3
                    } else {
                        blend(c1, c2, y as f64 / (side - 1) as f64)
                    }
                }
                // vertical stripes
                _ => {
                    if (x / cell.max(1)).is_multiple_of(2) {
                        blend(c1, c3, x as f64 / (side - 1) as f64)
                    } else {
                        c2
                    }
                }
            };
            pixels.extend_from_slice(&px);
        }
    }
    Image { width: side, height: side, pixels }
}

fn blend(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for i in 0..3 {
        out[i] = (a[i] as f64 * (1.0 - t) + b[i] as f64 * t).round() as u8;
    }
    out
}

fn synth_clip(samples: usize, sample_rate: u32, rng: &mut ChaCha8Rng) -> Waveform {
    let mut acc = vec![0.0f64; samples];
    let nyquist = sample_rate as f64 / 2.0;
    let tones = rng.random_range(3..7);
    for _ in 0..tones {
        let freq = rng.random_range(60.0..nyquist * 0.6);
        let amp = rng.random_range(0.1..0.5);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for (i, a) in acc.iter_mut().enumerate() {
            let t = i as f64 / sample_rate as f64;
            *a += amp * (std::f64::consts::TAU * freq * t + phase).sin();
        }
    }
    // one chirp sweeping upward
    let f0 = rng.random_range(80.0..400.0);
    let f1 = rng.random_range(f0..nyquist * 0.5);
    let amp = rng.random_range(0.1..0.3);
    let dur = samples as f64 / sample_rate as f64;
    for (i, a) in acc.iter_mut().enumerate() {
        let t = i as f64 / sample_rate as f64;
        let freq = f0 + (f1 - f0) * t / dur;
        *a += amp * (std::f64::consts::TAU * freq * t).sin();
    }
    // low-passed noise bed
    let mut state = 0.0f64;
    let alpha = rng.random_range(0.02..0.2);
    let namp = rng.random_range(0.02..0.1);
    for a in acc.iter_mut() {
        let white: f64 = rng.random_range(-1.0..1.0);
        state += alpha * (white - state);
        *a += namp * state;
    }
    // normalize peak to 0.85 for residual headroom
    let peak = acc.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-9);
    let scale = 0.85 / peak;
    Waveform::new(acc.iter().map(|&v| (v * scale) as f32).collect(), sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let img = Image::new(3, 2, (0u8..18).collect()).unwrap();
        write_ppm(&path, &img).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    #[test]
    fn non_p6_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pbm");
        std::fs::write(&path, b"P4\n2 2\n\x00").unwrap();
        assert!(matches!(read_ppm(&path), Err(Error::Format(_))));
        // 16-bit P6 likewise
        let deep = dir.path().join("deep.ppm");
        std::fs::write(&deep, b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_ppm(&deep), Err(Error::Format(_))));
    }

    #[test]
    fn rectangular_image_is_center_cropped_then_resized() {
        // 4x2: center square is columns 1..3
        let mut pixels = Vec::new();
        for x in 0..4 {
            pixels.extend_from_slice(&[x as u8 * 10, 0, 0]);
        }
        for x in 0..4 {
            pixels.extend_from_slice(&[x as u8 * 10 + 1, 0, 0]);
        }
        let img = Image::new(4, 2, pixels).unwrap();
        let out = crop_resize(&img, 2);
        assert_eq!(out.rgb(0, 0), [10, 0, 0]);
        assert_eq!(out.rgb(1, 0), [20, 0, 0]);
        assert_eq!(out.rgb(0, 1), [11, 0, 0]);
        assert_eq!(out.rgb(1, 1), [21, 0, 0]);
    }

    #[test]
    fn wav_float32_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Waveform::new((0..500).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000);
        write_wav(&path, &w, WavEncoding::Float32).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 16_000);
        assert!(w
            .samples
            .iter()
            .zip(&back.samples)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn wav_pcm16_round_trip_error_is_bounded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = Waveform::new(
            (0..500).map(|_| rng.random_range(-0.99..0.99)).collect(),
            44_100,
        );
        write_wav(&path, &w, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        for (a, b) in w.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn stereo_wav_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        // hand-built 2-channel PCM16 header with 2 frames
        let mut bytes: Vec<u8> = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 8).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&44100u32.to_le_bytes());
        bytes.extend_from_slice(&(44100u32 * 4).to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&8u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Unsupported(_))));
    }

    #[test]
    fn corpus_is_seed_deterministic_with_headroom() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        generate_corpus(dir_a.path(), 2, 2, 16, 600, 8_000, 42).unwrap();
        generate_corpus(dir_b.path(), 2, 2, 16, 600, 8_000, 42).unwrap();
        for sub in ["images/img_000.ppm", "images/img_001.ppm", "audio/clip_000.wav"] {
            let a = std::fs::read(dir_a.path().join(sub)).unwrap();
            let b = std::fs::read(dir_b.path().join(sub)).unwrap();
            assert_eq!(a, b, "{sub} differs across identical seeds");
        }
        let clip = read_wav(dir_a.path().join("audio/clip_001.wav")).unwrap();
        assert_eq!(clip.len(), 600);
        let peak = clip.samples.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
        assert!(peak <= 0.9, "peak {peak}");
    }

    #[test]
    fn pairing_is_reproducible_and_epoch_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        generate_corpus(dir.path(), 4, 2, 16, 600, 8_000, 1).unwrap();
        let spec = DatasetSpec {
            image_dir: dir.path().join("images"),
            audio_dir: dir.path().join("audio"),
            image_side: 16,
            clip_samples: 512,
            pairing_seed: 7,
        };
        let e0a = pairs_for_epoch(&spec, 0).unwrap();
        let e0b = pairs_for_epoch(&spec, 0).unwrap();
        assert_eq!(e0a.len(), 4);
        for (a, b) in e0a.iter().zip(&e0b) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.clip, b.clip);
            assert_eq!(a.clip_offset, b.clip_offset);
        }
        let e1 = pairs_for_epoch(&spec, 1).unwrap();
        let same = e0a
            .iter()
            .zip(&e1)
            .all(|(a, b)| a.image == b.image && a.clip == b.clip && a.clip_offset == b.clip_offset);
        assert!(!same, "different epochs should derive different pairings");
        let (img, clip) = load_pair(&spec, &e0a[0]).unwrap();
        assert_eq!((img.width, img.height), (16, 16));
        assert_eq!(clip.len(), 512);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::create_dir_all(dir.path().join("audio")).unwrap();
        let spec = DatasetSpec {
            image_dir: dir.path().join("images"),
            audio_dir: dir.path().join("audio"),
            image_side: 16,
            clip_samples: 512,
            pairing_seed: 7,
        };
        assert!(matches!(pairs_for_epoch(&spec, 0), Err(Error::Config(_))));
    }
}
