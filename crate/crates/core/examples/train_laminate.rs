//! Fits a depth-6 network to exact labels of a rank-2 laminate.
//!
//! Usage: `cargo run --release --example train_laminate -- [seed] [activation_rate] [lr]`

use dmn::training::{generate_dataset, train_from_scratch, Laminate, Oracle, TrainingConfig};

fn main() -> dmn::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);
    let mut config = TrainingConfig { seed, ..TrainingConfig::default() };
    if let Some(a) = args.next() {
        config.activation_rate = a.parse().expect("activation rate");
    }
    if let Some(lr) = args.next() {
        config.learning_rate = lr.parse().expect("learning rate");
    }
    if let Some(m) = args.next() {
        config.momentum = m.parse().expect("momentum");
    }
    if let Some(c) = args.next() {
        config.max_gradient_norm = c.parse().expect("gradient bound");
    }
    let inner = Laminate::layered([1.0, 0.0, 0.0], 0.3, Laminate::Phase(0), Laminate::Phase(1));
    let microstructure = Laminate::layered([0.0, 0.6, 0.8], 0.6, inner, Laminate::Phase(1));
    let (train_set, test_set) = generate_dataset(&config, &Oracle::Laminate(microstructure))?;
    let (params, report) = train_from_scratch(&config, &train_set, &test_set, 6)?;
    for r in report.epochs.iter().filter(|r| r.epoch % 50 == 0 || r.epoch < 10) {
        println!("{:5} train {:.3e} test {:.3e} nodes {}", r.epoch, r.train_cost, r.test_cost, r.active_nodes);
    }
    println!(
        "final: test J {:.3e}, test error {:.3}%, active leaves {}",
        report.final_test_cost,
        100.0 * report.final_test_error,
        params.active_leaf_count()
    );
    Ok(())
}
