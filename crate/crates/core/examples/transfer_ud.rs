//! Lifts a 2-D network to a unidirectional 3-D one and compares the
//! stiffness of a fiber/epoxy material point across and along the fibers.
//!
//! Usage: `cargo run --example transfer_ud -- [depth] [seed]`

use dmn::materials::Material;
use dmn::network::{transfer_2d_to_3d, Params2d};
use dmn::solver::Phase;
use dmn::training::predict_network;
use rand::{Rng, SeedableRng};

fn main() -> dmn::Result<()> {
    let mut args = std::env::args().skip(1);
    let depth: usize = args.next().map(|a| a.parse().expect("depth")).unwrap_or(4);
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let leaves = 1 << (depth - 1);
    let z = (0..leaves).map(|_| rng.gen_range(0.1..1.0)).collect();
    let theta = (0..(2 * leaves - 1)).map(|_| rng.gen_range(-3.1..3.1)).collect();
    let params = transfer_2d_to_3d(&Params2d::new(depth, z, theta))?;
    print!("{}", params.to_toml());

    let stiffness = |p: Phase| match p.material {
        Material::Elastic { stiffness } => stiffness,
        Material::VonMises { young, poisson, .. } => dmn::tensor::isotropic_stiffness(young, poisson),
    };
    // leaf frames of a transferred network map global axis 3 to local axis 1,
    // which is the fiber axis of the phase
    let c = predict_network(&params, &[stiffness(Phase::fiber()), stiffness(Phase::epoxy())])?;
    let s = c.try_inverse().expect("effective stiffness is invertible");
    eprintln!("E1 = {:.3} GPa, E2 = {:.3} GPa, E3 (fiber direction) = {:.3} GPa", 1.0 / s[(0, 0)], 1.0 / s[(1, 1)], 1.0 / s[(2, 2)]);
    Ok(())
}
