//! Divides a spherical macro cell through a random network and prints the
//! resulting micro-cells.
//!
//! Usage: `cargo run --example cell_division -- [depth] [h_mm] [seed]`

use dmn::geometry::{cell_volume, propagate_scales, reciprocal_length};
use dmn::{NetworkParams, ScaleTensor};
use nalgebra::Vector3;
use rand::SeedableRng;

fn main() -> dmn::Result<()> {
    let mut args = std::env::args().skip(1);
    let depth: usize = args.next().map(|a| a.parse().expect("depth")).unwrap_or(3);
    let h: f64 = args.next().map(|a| a.parse().expect("h")).unwrap_or(1.0);
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);

    let params = NetworkParams::random(depth, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))?;
    let macro_cell = ScaleTensor::sphere(h)?;
    let total = cell_volume(&macro_cell)?;
    println!("node phase  weight   volume/V0  semi-axes (mm)                 v_c along e1 (1/mm)");
    for cell in propagate_scales(&params, &macro_cell)? {
        let (axes, _) = cell.scale.semi_axes();
        let v = cell_volume(&cell.scale)?;
        println!(
            "{:4} {:5} {:8.5} {:10.5}  [{:8.5} {:8.5} {:8.5}]  {:9.4}",
            cell.node,
            cell.phase,
            cell.weight,
            v / total,
            axes[0],
            axes[1],
            axes[2],
            reciprocal_length(&cell.scale, &Vector3::x())?
        );
    }
    Ok(())
}
