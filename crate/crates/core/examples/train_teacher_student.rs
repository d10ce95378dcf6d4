//! Fits a depth-4 student network to labels of a random depth-2 teacher.
//!
//! Usage: `cargo run --release --example train_teacher_student -- [epochs] [lr] [activation_rate] [batch] [decay_every] [seed]`

use dmn::training::{generate_dataset, train_from_scratch, Oracle, TrainingConfig};
use dmn::NetworkParams;
use rand::SeedableRng;

fn main() -> dmn::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = TrainingConfig::default();
    if let Some(e) = args.next() {
        config.epochs = e.parse().expect("epochs");
    }
    if let Some(lr) = args.next() {
        config.learning_rate = lr.parse().expect("learning rate");
    }
    if let Some(a) = args.next() {
        config.activation_rate = a.parse().expect("activation rate");
    }
    if let Some(b) = args.next() {
        config.batch_size = b.parse().expect("batch size");
    }
    if let Some(k) = args.next() {
        config.decay_every = k.parse().expect("decay period");
    }

    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(1);
    config.seed = seed;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let teacher = NetworkParams::random(2, &mut rng)?;
    let (train_set, test_set) = generate_dataset(&config, &Oracle::Teacher(teacher))?;
    let (_, report) = train_from_scratch(&config, &train_set, &test_set, 4)?;
    for r in report.epochs.iter().filter(|r| r.epoch % 10 == 0 || r.epoch == 1) {
        println!("{:5} train {:.3e} test {:.3e} nodes {}", r.epoch, r.train_cost, r.test_cost, r.active_nodes);
    }
    println!(
        "final: test J {:.3e}, test error {:.3}%, pruned {}",
        report.final_test_cost,
        100.0 * report.final_test_error,
        report.pruned_leaves
    );
    Ok(())
}
