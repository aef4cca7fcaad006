//! Faster-than-Nyquist BPSK at 2WT = 0.48: optimized pulse against RRC pulses of the same bandwidth.

use chanshort::air::AirConfig;
use chanshort::packing::{ftn_air, FtnPulse, FtnSetup};

fn main() -> chanshort::Result<()> {
    let setup = FtnSetup::default();
    let air = AirConfig::new(5_000, 4, 7);
    println!("esn0_db  optimized  rrc0.1  rrc0.2   (CS memory 1, bit/symbol)");
    for (j, snr) in [0.0, 6.0, 12.0].into_iter().enumerate() {
        let cfg = air.for_job(j as u64);
        let rates: Vec<String> = [FtnPulse::Optimized, FtnPulse::Rrc(0.1), FtnPulse::Rrc(0.2)]
            .into_iter()
            .map(|kind| ftn_air(kind, &setup, 1, snr, &cfg).map(|a| format!("{:.3}", a.value)))
            .collect::<chanshort::Result<_>>()?;
        println!("{snr:>7}  {}", rates.join("      "));
    }
    Ok(())
}
