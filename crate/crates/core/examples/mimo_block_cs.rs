//! Block channel shortening on the 2x2 reference channel with memory 3.

use chanshort::dsp::DEFAULT_GRID;
use chanshort::obs::{BlockForneyModel, BlockUngerboeckModel};
use chanshort::shortening::{design_block_cs, finite_n_gaussian_air};
use chanshort::C64;
use nalgebra::DMatrix;

fn main() -> chanshort::Result<()> {
    let h = BlockForneyModel::reference_2x2();
    let energy = BlockForneyModel::new(h.clone(), 1.0)?.energy();
    let v = DMatrix::<C64>::identity(2, 2);
    println!("E_H = {energy:.4}");
    for snr in [0.0, 5.0, 10.0, 15.0] {
        let n0 = energy * 10f64.powf(-snr / 10.0);
        let g = BlockUngerboeckModel::from_forney(&h, n0)?.spectrum(DEFAULT_GRID);
        let rates: Vec<String> = (0..=3)
            .map(|l| design_block_cs(&g, &v, n0, l).map(|d| format!("{:.3}", d.i_opt)))
            .collect::<chanshort::Result<_>>()?;
        let finite = finite_n_gaussian_air(&h, &v, n0, 1, 128)?;
        println!("E_H/N0 {snr:>4} dB: I_OPT L=0..3 [{}] bit/vector, finite N=128 at L=1 {finite:.3}", rates.join(", "));
    }
    Ok(())
}
