//! Closed-form channel shortening on EPR4: target, rate versus memory, and the Szego limit.

use chanshort::dsp::{szego_logdet, ChannelTaps};
use chanshort::shortening::design_scalar_cs_for_channel;

fn main() -> chanshort::Result<()> {
    let h = ChannelTaps::epr4();
    for snr in [0.0, 6.0, 12.0] {
        let n0 = 10f64.powf(-snr / 10.0);
        println!("SNR {snr} dB");
        for l in 0..=3 {
            let d = design_scalar_cs_for_channel(&h, n0, l)?;
            let gr: Vec<f64> = d.gr.taps().iter().map(|v| v.re).collect();
            println!("  L={l}: I_OPT {:.4} bit, Gr {:.4?}", d.i_opt, gr);
        }
        let (finite, limit) = szego_logdet(&h.autocorrelation(), 1024, n0)?;
        println!("  Gaussian capacity (Szego) {limit:.4}, N=1024 log-det {finite:.4}");
    }
    Ok(())
}
