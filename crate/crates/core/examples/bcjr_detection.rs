//! MAP symbol detection on EPR4 with the BCJR algorithm, checked against exhaustive search.

use chanshort::detector::{bcjr, brute_force_map, map_decide, Alphabet, BcjrOptions, DetectionLaw, ForneyLaw};
use chanshort::dsp::{ChannelTaps, Constellation, Modulation, SeededRng};
use chanshort::obs::{ChannelSimulator, ForneyModel};

fn main() -> chanshort::Result<()> {
    let h = ChannelTaps::epr4();
    let alphabet = Alphabet::scalar(&Constellation::new(Modulation::Bpsk))?;
    let mut rng = SeededRng::new(42);
    for snr in [2.0, 6.0, 10.0] {
        let n0 = 10f64.powf(-snr / 10.0);
        let n = 20_000;
        let idx: Vec<usize> = (0..n).map(|_| rng.index(2)).collect();
        let r = ForneyModel::new(h.clone(), n0)?.simulate(&alphabet.map(&idx), &mut rng);
        let law = DetectionLaw::from(ForneyLaw::scalar(&h, n0)?);
        let post = bcjr(&law, &alphabet, &r, n, None, BcjrOptions::default())?;
        let errors = map_decide(&post).iter().zip(&idx).filter(|(a, b)| a != b).count();
        println!("SNR {snr:>4} dB: BER {:.2e}", errors as f64 / n as f64);
    }

    let n = 8;
    let n0 = 0.5;
    let idx: Vec<usize> = (0..n).map(|_| rng.index(2)).collect();
    let r = ForneyModel::new(h.clone(), n0)?.simulate(&alphabet.map(&idx), &mut rng);
    let law = DetectionLaw::from(ForneyLaw::scalar(&h, n0)?);
    let post = bcjr(&law, &alphabet, &r, n, None, BcjrOptions::default())?;
    let brute = brute_force_map(&law, &alphabet, &r, n, None)?;
    let diff = post.probs.iter().zip(&brute.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{n}-symbol block: max APP difference to exhaustive search {diff:.1e}");
    Ok(())
}
