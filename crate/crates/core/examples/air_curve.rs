//! Monte Carlo rates of the exact, CS, truncation and MMSE-shortening detectors on EPR4.

use chanshort::air::{mc_air_trellis, AirConfig};
use chanshort::detector::{Alphabet, DetectionLaw, ForneyLaw};
use chanshort::dsp::{ChannelTaps, Constellation, Modulation};
use chanshort::obs::ForneyModel;
use chanshort::shortening::{design_scalar_cs_for_channel, mmse_legacy_cs, truncation_law_forney};

fn main() -> chanshort::Result<()> {
    let h = ChannelTaps::epr4();
    let alphabet = Alphabet::scalar(&Constellation::new(Modulation::Bpsk))?;
    let air = AirConfig::new(5_000, 8, 7);
    println!("snr_db  exact   cs(L=1)  trunc(L=1)  mmse(L=1)");
    for (j, snr) in [0.0, 3.0, 6.0, 9.0].into_iter().enumerate() {
        let n0 = 10f64.powf(-snr / 10.0);
        let sim = ForneyModel::new(h.clone(), n0)?;
        let cfg = air.for_job(j as u64);
        let laws: Vec<DetectionLaw> = vec![
            ForneyLaw::scalar(&h, n0)?.into(),
            design_scalar_cs_for_channel(&h, n0, 1)?.law_for_forney(64)?.into(),
            truncation_law_forney(&h, n0, 1, 1.0)?.into(),
            mmse_legacy_cs(&h, n0, 1, 31)?.law.into(),
        ];
        let rates: Vec<String> = laws
            .iter()
            .map(|law| mc_air_trellis(&sim, law, &alphabet, &cfg).map(|a| format!("{:.3}", a.value)))
            .collect::<chanshort::Result<_>>()?;
        println!("{snr:>6}  {}", rates.join("    "));
    }
    Ok(())
}
