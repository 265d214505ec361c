// quick throwaway benchmark of one training iteration
use std::time::Instant;
use wavestamp_core::io::generate_corpus;
use wavestamp_core::trainer::{train, TrainConfig};

fn main() {
    let dir = std::env::temp_dir().join("ws_bench");
    let _ = std::fs::remove_dir_all(&dir);
    generate_corpus(&dir, 4, 4, 64, 8192, 16_000, 1).unwrap();
    let mut config = TrainConfig::default();
    config.iterations = 30;
    config.checkpoint_every = 0;
    config.image_dir = dir.join("images");
    config.audio_dir = dir.join("audio");
    config.log_path = dir.join("log.csv");
    config.checkpoint_path = dir.join("net.pxwc");
    let t0 = Instant::now();
    let summary = train(&config).unwrap();
    let dt = t0.elapsed();
    println!("30 iterations in {:.2?} -> {:.0} ms/iter; first loss {:.4} final {:.4}",
        dt, dt.as_secs_f64() * 1000.0 / 30.0, summary.first_loss, summary.final_loss);
}
