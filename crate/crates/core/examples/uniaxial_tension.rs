//! Uniaxial tension of a particle-reinforced material point up to failure.
//!
//! Usage: `cargo run --release --example uniaxial_tension -- [h_mm] [strain_step] [sign]`

use dmn::solver::{particle_fixture, MacroBC, Phase, Solver};
use dmn::ScaleTensor;

fn main() -> dmn::Result<()> {
    let mut args = std::env::args().skip(1);
    let h: f64 = args.next().map(|a| a.parse().expect("h")).unwrap_or(1.0);
    let step: f64 = args.next().map(|a| a.parse().expect("strain step")).unwrap_or(2e-5);
    let sign: f64 = args.next().map(|a| a.parse().expect("sign")).unwrap_or(1.0);

    let phases = vec![Phase::particle(), Phase::particle_matrix()];
    let (mut solver, mut state) = Solver::new(particle_fixture(0.226)?, phases, &ScaleTensor::sphere(h)?)?;

    let bc = MacroBC::uniaxial(0, sign * step, 1e-4);
    let mut peak: f64 = 0.0;
    println!("strain,stress,released_energy,cracks");
    for _ in 0..20_000 {
        let r = solver.solve_step_adaptive(&mut state, &bc)?;
        let s = sign * state.stress[0];
        peak = peak.max(s);
        println!("{:.6e},{:.6e},{:.6e},{}", state.strain[0], state.stress[0], r.diagnostics.released_energy, state.crack_count());
        if peak > 0.0 && s < 1e-3 * peak {
            break;
        }
    }
    eprintln!("h = {h} mm: peak {peak:.5} GPa, released {:.6e}", dmn::solver::diagnostics(&state).released_energy);
    Ok(())
}
