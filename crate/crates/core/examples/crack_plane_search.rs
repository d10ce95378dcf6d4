//! Finds the critical crack planes of a few stress states.
//!
//! Usage: `cargo run --example crack_plane_search -- [beta]`

use dmn::activation::critical_planes;
use dmn::tensor::to_mandel;
use nalgebra::Matrix3;

fn main() -> dmn::Result<()> {
    let beta: f64 = std::env::args().nth(1).map(|a| a.parse().expect("beta")).unwrap_or(1.0);
    let states = [
        ("uniaxial tension", Matrix3::from_diagonal(&[0.2, 0.0, 0.0].into())),
        ("uniaxial compression", Matrix3::from_diagonal(&[-0.2, 0.0, 0.0].into())),
        ("pure shear", Matrix3::new(0.0, 0.1, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0)),
        ("biaxial", Matrix3::from_diagonal(&[0.2, 0.1, -0.05].into())),
    ];
    for (name, sigma) in states {
        println!("{name} (beta = {beta}):");
        for c in critical_planes(&to_mandel(&sigma), beta)? {
            println!(
                "  n = [{:7.4} {:7.4} {:7.4}]  theta = {:7.2} deg  t_m = {:.5} GPa",
                c.normal[0],
                c.normal[1],
                c.normal[2],
                c.theta.to_degrees(),
                c.t_m
            );
        }
    }
    Ok(())
}
