//! 8PSK rates on the nonlinear satellite channel with CS and truncation detectors.

use chanshort::air::AirConfig;
use chanshort::satchan::{satellite_air, SatelliteConfig};

fn main() -> chanshort::Result<()> {
    let cfg = SatelliteConfig { psat_n0_db: vec![9.0, 12.0], air: AirConfig::new(3_000, 4, 7), ..SatelliteConfig::default() };
    let run = satellite_air(&cfg)?;
    println!("OBO {:.2} dB, model residual {:.1} dB", run.obo_db.unwrap_or(f64::NAN), run.residual_db);
    print!("{}", run.csv());
    Ok(())
}
