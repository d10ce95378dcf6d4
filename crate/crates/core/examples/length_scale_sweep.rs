//! Released energy and strength of a failing material point against the
//! size of the macro cell.
//!
//! Usage: `cargo run --release --example length_scale_sweep`

use dmn::solver::{diagnostics, particle_fixture, MacroBC, Phase, Solver};
use dmn::ScaleTensor;
use rayon::prelude::*;

fn run(h: f64) -> dmn::Result<(f64, f64)> {
    let phases = vec![Phase::particle(), Phase::particle_matrix()];
    let (mut solver, mut state) = Solver::new(particle_fixture(0.226)?, phases, &ScaleTensor::sphere(h)?)?;
    let bc = MacroBC::uniaxial(0, 2e-5, 1e-4);
    let mut peak: f64 = 0.0;
    for _ in 0..20_000 {
        solver.solve_step_adaptive(&mut state, &bc)?;
        peak = peak.max(state.stress[0]);
        if state.stress[0] < 1e-3 * peak {
            break;
        }
    }
    Ok((peak, diagnostics(&state).released_energy))
}

fn main() -> dmn::Result<()> {
    let hs = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0];
    let results: Vec<_> = hs.par_iter().map(|&h| run(h)).collect::<dmn::Result<_>>()?;
    println!("h_mm,peak_GPa,released_GPa_mm3");
    for (h, (peak, released)) in hs.iter().zip(results) {
        println!("{h},{peak:.6},{released:.6e}");
    }
    Ok(())
}
