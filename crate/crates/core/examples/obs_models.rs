//! Whitened and matched-filter views of the same channel, and the spectral factor that links them.

use chanshort::dsp::{ChannelTaps, PulseSamples, SeededRng};
use chanshort::obs::{is_minimum_phase, pulse_autocorrelation, spectral_factorize, ChannelSimulator, ForneyModel};
use chanshort::C64;

fn main() -> chanshort::Result<()> {
    let h = ChannelTaps::epr4();
    let forney = ForneyModel::new(h.clone(), 0.1)?;
    let ungerboeck = forney.to_ungerboeck();
    println!("EPR4 taps          {:?}", re(h.taps()));
    println!("autocorrelation g  {:?}", re(ungerboeck.g.taps()));

    let f = spectral_factorize(&ungerboeck.g)?;
    println!("minimum-phase factor {:?} (min phase: {})", re(f.taps()), is_minimum_phase(&f, 1e-9));

    let symbols: Vec<C64> = [1.0, -1.0, -1.0, 1.0, 1.0, 1.0].iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut rng = SeededRng::new(1);
    println!("whitened samples   {:.3?}", re(&forney.simulate(&symbols, &mut rng)));
    println!("matched samples    {:.3?}", re(&ungerboeck.simulate(&symbols, &mut rng)));

    // time packing: an RRC pulse sampled faster than Nyquist picks up ISI
    let p = PulseSamples::rrc(0.2, 32, 20)?;
    for tau in [1.0, 0.8, 0.7] {
        let g = pulse_autocorrelation(&p, (tau * 20.0) as usize)?;
        let isi: f64 = g.taps()[1..].iter().map(|v| 2.0 * v.norm_sqr()).sum();
        println!("RRC 0.2 at tau {tau}: g0 {:.4}, ISI energy {:.4}, memory {}", g.taps()[0].re, isi, g.memory());
    }
    Ok(())
}

fn re(v: &[C64]) -> Vec<f64> {
    v.iter().map(|c| (c.re * 1e4).round() / 1e4).collect()
}
