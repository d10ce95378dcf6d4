//! Traces the effective traction-separation curve of a matrix layer under a
//! monotonic normal opening, for several relaxation times.
//!
//! Usage: `cargo run --example cohesive_law -- [dt_ms]`

use dmn::cohesive::{evaluate_cohesive, CohesiveParams, CohesiveState};
use nalgebra::Vector3;

fn main() {
    let dt: f64 = std::env::args().nth(1).map(|a| a.parse().expect("dt")).unwrap_or(1e-4);
    let base = CohesiveParams::particle_matrix();
    let taus = [dt / 100.0, dt, 10.0 * dt];
    let mut states = taus.map(|tau| (CohesiveParams { tau, ..base }, CohesiveState::intact(&base)));
    let steps = 240;
    let dd = Vector3::new(1.2 * base.d_f() / steps as f64, 0.0, 0.0);
    print!("opening,backbone");
    for tau in taus {
        print!(",tau={tau:e}");
    }
    println!();
    for k in 1..=steps {
        let d = k as f64 * dd[0];
        print!("{d:.6e},{:.6e}", base.backbone(d).0);
        for (p, s) in states.iter_mut() {
            let r = evaluate_cohesive(p, s, &dd, dt);
            *s = r.state;
            print!(",{:.6e}", r.t_m);
        }
        println!();
    }
    eprintln!("G_c = {} GPa·mm, d_c = {:e} mm, d_f = {} mm", base.g_c, base.d_c(), base.d_f());
}
