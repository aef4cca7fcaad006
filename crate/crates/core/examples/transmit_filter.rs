//! Transmit spectrum optimized for a memory-1 CS receiver on Proakis B, against flat and waterfilling.

use chanshort::dsp::{ChannelTaps, SpectrumSamples, DEFAULT_GRID};
use chanshort::txfilter::{objective_of_psd, optimize_transmit_filter, waterfilling, TxOptions};

fn main() -> chanshort::Result<()> {
    let power = ChannelTaps::proakis_b().power_spectrum(DEFAULT_GRID)?;
    let spec = optimize_transmit_filter(&power, 0.9, 1, &TxOptions::default())?;
    if let Some((cos, _)) = spec.trig_coefficients() {
        println!("Proakis B, N0 = 0.9, L = 1: A0 {:.3}, A1 {:.3}", cos[0], cos[1]);
    }
    println!("objective {:.4} bit vs flat {:.4}", spec.objective, spec.flat_objective);

    let flat = SpectrumSamples::from_real(vec![1.0; power.len()])?;
    println!("snr_db  optimized  flat  waterfilling  (L = 1 objective)");
    for snr in [0.0, 10.0, 20.0, 30.0] {
        let n0 = 10f64.powf(-snr / 10.0);
        let opt = optimize_transmit_filter(&power, n0, 1, &TxOptions::default())?.objective;
        let wf = waterfilling(&power, n0, 1.0)?;
        println!(
            "{snr:>6}  {opt:.4}     {:.4}  {:.4}",
            objective_of_psd(&power, &flat, n0, 1)?,
            objective_of_psd(&power, &wf.psd, n0, 1)?
        );
    }
    Ok(())
}
