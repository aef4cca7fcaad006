//! Time packing of QPSK with RRC pulses and a memory-2 CS detector per rail.

use chanshort::air::AirConfig;
use chanshort::dsp::{Constellation, Modulation};
use chanshort::packing::{optimize_ase, orthogonal_eta, PackingConfig, PackingDetector};

fn main() -> chanshort::Result<()> {
    let cfg = PackingConfig {
        modulation: Modulation::Qpsk,
        rolloff: 0.2,
        span: 32,
        oversampling: 20,
        detector: PackingDetector::TrellisCs(2),
        rails: true,
        taus: vec![0.7, 0.8, 0.9, 1.0],
        nus: vec![1.2],
        widths: vec![],
        esn0_db: vec![0.0, 3.0, 6.0, 9.0, 12.0],
        ebn0_db: vec![3.0, 6.0],
        neighbors: 0,
        air: AirConfig::new(5_000, 4, 7),
        budget: None,
    };
    let result = optimize_ase(&cfg)?;
    let qpsk = Constellation::new(Modulation::Qpsk);
    for o in &result.optima {
        println!(
            "Eb/N0 {} dB: eta_M {:.3} bit/s/Hz at tau {} (orthogonal {:.3})",
            o.ebn0_db,
            o.eta_max,
            o.tau_opt,
            orthogonal_eta(&qpsk, 0.2, o.ebn0_db)?
        );
    }
    print!("{}", result.summary_csv());
    Ok(())
}
