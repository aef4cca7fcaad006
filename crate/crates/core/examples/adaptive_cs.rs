//! Training-based CS design on EPR4 compared with the known-channel design.

use chanshort::detector::Alphabet;
use chanshort::dsp::{ChannelTaps, Constellation, Modulation, SeededRng};
use chanshort::obs::{ChannelSimulator, ForneyModel};
use chanshort::shortening::{adaptive_cs, design_scalar_cs_for_channel};

fn main() -> chanshort::Result<()> {
    let h = ChannelTaps::epr4();
    let n0 = 10f64.powf(-0.6);
    let known = design_scalar_cs_for_channel(&h, n0, 1)?;
    println!("known b {:.4?}, I_OPT {:.4}", known.b.iter().map(|v| v.re).collect::<Vec<_>>(), known.i_opt);
    let alphabet = Alphabet::scalar(&Constellation::new(Modulation::Bpsk))?;
    let mut rng = SeededRng::new(9);
    for len in [2_000, 10_000, 100_000] {
        let idx: Vec<usize> = (0..len).map(|_| rng.index(2)).collect();
        let c = alphabet.map(&idx);
        let r = ForneyModel::new(h.clone(), n0)?.simulate(&c, &mut rng);
        let a = adaptive_cs(&c, &r, 1, 31)?;
        let i = a.design.as_ref().map_or(f64::NAN, |d| d.i_opt);
        println!(
            "training {len:>6}: b_hat {:.4?}, training MSE {:.4}, I_OPT {i:.4}",
            a.b_hat.iter().map(|v| v.re).collect::<Vec<_>>(),
            a.training_mse
        );
    }
    Ok(())
}
