//! Saleh amplifier, IMUX/OMUX filters and the Volterra receiver model of the satellite channel.

use chanshort::dsp::{Constellation, Modulation, PulseSamples};
use chanshort::satchan::{fit_volterra, SalehHpa, SatelliteChain, TransponderSpec, VolterraProbe};

fn main() -> chanshort::Result<()> {
    let hpa = SalehHpa::default();
    println!("saturation input {:.4}, saturation power {:.4}", hpa.saturation_input(), hpa.saturation_power());
    for rho in [0.25, 0.5, 1.0, 1.5] {
        println!("  AM/AM({rho}) = {:.4}, AM/PM({rho}) = {:.2} deg", hpa.am_am(rho), hpa.am_pm(rho).to_degrees());
    }
    for ibo in [0.0, 3.0, 6.0] {
        let spec = TransponderSpec::standard(8, ibo)?;
        let chain = SatelliteChain::new(spec, PulseSamples::rrc(0.05, 32, 8)?, 1.0, &Constellation::new(Modulation::Psk8))?;
        let probe = VolterraProbe { modulation: Modulation::Psk8, symbols: 4000, ..VolterraProbe::default() };
        let fit = fit_volterra(5, &chain, &probe)?;
        println!("IBO {ibo} dB: OBO {:.2} dB, order-5 model residual {:.1} dB", chain.obo_db().unwrap_or(f64::NAN), fit.residual_db);
    }
    Ok(())
}
