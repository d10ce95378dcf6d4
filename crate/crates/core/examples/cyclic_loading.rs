//! Tension past the peak, unloading, compression and reloading of a
//! cracking material point.
//!
//! Usage: `cargo run --release --example cyclic_loading -- [h_mm]`

use dmn::solver::{particle_fixture, LoadSegment, Phase, Solver, run_load_path};
use dmn::ScaleTensor;

fn main() -> dmn::Result<()> {
    let h: f64 = std::env::args().nth(1).map(|a| a.parse().expect("h")).unwrap_or(1.0);
    let phases = vec![Phase::particle(), Phase::particle_matrix()];
    let (mut solver, mut state) = Solver::new(particle_fixture(0.226)?, phases, &ScaleTensor::sphere(h)?)?;
    let path = [
        LoadSegment::uniaxial(0, 2.5e-3, 125, 1e-4),
        LoadSegment::uniaxial(0, 0.0, 125, 1e-4),
        LoadSegment::uniaxial(0, -1e-3, 50, 1e-4),
        LoadSegment::uniaxial(0, 4e-3, 250, 1e-4),
    ];
    let (records, error) = run_load_path(&mut solver, &mut state, &path);
    println!("step,strain,stress,released_energy,cracks");
    for r in &records {
        println!("{},{:.6e},{:.6e},{:.6e},{}", r.step, r.strain[0], r.stress[0], r.released_energy, r.cracks);
    }
    match error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
