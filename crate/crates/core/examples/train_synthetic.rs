//! Desk-scale tracker training on synthetic translations.
//!
//! `cargo run --release -p deeppt-core --example train_synthetic -- [epochs] [lr] [w1 .. w9]`

use std::time::Instant;

use deeppt::datasets::make_synthetic_translations;
use deeppt::nn::TrainConfig;
use deeppt::tracker::{track_patch, train_tracker, Architecture, NetworkParams};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: u32 = args.first().and_then(|s| s.parse().ok()).unwrap_or(20);
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let mut widths = [1, 8, 8, 8, 8, 16, 16, 16, 16, 16];
    for (i, a) in args.iter().skip(2).take(9).enumerate() {
        widths[i + 1] = a.parse().unwrap();
    }
    let arch = Architecture { widths, score_hidden: [64, 32], detector_hidden: 16 };
    let train = make_synthetic_translations(2000, 1);
    let test = make_synthetic_translations(500, 2);
    let mut params = NetworkParams::<f32>::init(&arch, 0);
    let config = TrainConfig { epochs, base_lr: lr, batch_size: 32, ..TrainConfig::tracker() };
    let start = Instant::now();
    let log = train_tracker(&mut params, &train, &config).unwrap();
    for l in &log {
        println!("epoch {} loss {:.4}", l.epoch, l.mean_loss);
    }
    let (mut a1, mut a3) = (0, 0);
    for s in &test {
        let (d, _) = track_patch(&params, &s.template_tensor(), &s.search_tensor()).unwrap();
        let gt = s.displacement();
        let e = (((d.dx - gt.dx).pow(2) + (d.dy - gt.dy).pow(2)) as f64).sqrt();
        a1 += (e <= 1.0) as usize;
        a3 += (e <= 3.0) as usize;
    }
    println!(
        "{:?} acc1 {:.3} acc3 {:.3} in {:.1}s",
        widths,
        a1 as f64 / test.len() as f64,
        a3 as f64 / test.len() as f64,
        start.elapsed().as_secs_f64()
    );
}
