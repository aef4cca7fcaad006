//! Batch experiment runner behind the `chanshort` binary.
//!
//! A run is described by flat `key = value` config files with `[section]`
//! headers, overridden by command-line flags. Every CSV artifact starts with
//! `#` lines holding the crate version, a SHA-256 of the resolved config and
//! the seed, followed by the resolved config itself.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::air::{mc_air_trellis, AirConfig};
use crate::detector::{Alphabet, DetectionLaw, ForneyLaw};
use crate::dsp::{szego_logdet, ChannelTaps, Constellation, Modulation, DEFAULT_GRID};
use crate::error::{Error, Result};
use crate::obs::ForneyModel;
use crate::packing::{optimize_ase, PackingConfig, PackingDetector};
use crate::satchan::{read_filter_file, satellite_air, MuxFilterDesign, SatelliteConfig, VolterraProbe};
use crate::shortening::{
    design_scalar_cs_for_channel, mmse_legacy_cs, realize_front_end, truncation_law_forney, ShortenerKind,
    DEFAULT_FRONT_END_LAGS,
};
use crate::txfilter::{optimize_transmit_filter, TxOptions};
use crate::C64;

pub const THREADS_ENV: &str = "CHANSHORT_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    DesignCs,
    AirCurve,
    TxfilterOpt,
    Pack,
    SatelliteSim,
    SzegoCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::DesignCs => "design-cs",
            Self::AirCurve => "air-curve",
            Self::TxfilterOpt => "txfilter-opt",
            Self::Pack => "pack",
            Self::SatelliteSim => "satellite-sim",
            Self::SzegoCheck => "szego-check",
        }
    }

    /// Accepted `section.key` names with their defaults.
    fn schema(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Self::DesignCs => &[("channel.taps", "epr4"), ("design.memory", "1"), ("design.snr_db", "6")],
            Self::AirCurve => &[
                ("channel.taps", "epr4"),
                ("channel.modulation", "bpsk"),
                ("detector.kinds", "cs,trunc"),
                ("detector.memory", "1"),
                ("detector.prefilter_taps", "31"),
                ("air.snr_db", "0,2,4,6,8"),
                ("air.symbols", "100000"),
                ("air.blocks", "10"),
            ],
            Self::TxfilterOpt => &[
                ("channel.taps", "proakis-b"),
                ("design.memory", "1"),
                ("design.n0", "0.9"),
                ("design.multistart", "3"),
            ],
            Self::Pack => &[
                ("signal.modulation", "qpsk"),
                ("signal.rolloff", "0.2"),
                ("signal.span", "32"),
                ("signal.oversampling", "20"),
                ("signal.rails", "true"),
                ("signal.neighbors", "1"),
                ("detector.kind", "trellis-cs"),
                ("detector.memory", "4"),
                ("detector.mmse_taps", "11"),
                ("detector.mmse_oversampling", "1"),
                ("grid.taus", "0.7,0.8,0.9,1"),
                ("grid.nus", "1.2"),
                ("grid.widths", ""),
                ("grid.esn0_db", "-3,0,3,6,9,12"),
                ("grid.ebn0_db", "2,4,6"),
                ("grid.budget_s", "0"),
                ("air.symbols", "20000"),
                ("air.blocks", "10"),
            ],
            Self::SatelliteSim => &[
                ("signal.modulation", "8psk"),
                ("signal.rolloff", "0.05"),
                ("signal.span", "32"),
                ("transponder.ibo_db", "0"),
                ("transponder.oversampling", "8"),
                ("transponder.imux_bandwidth", "0.94"),
                ("transponder.omux_bandwidth", "0.85"),
                ("transponder.imux_file", ""),
                ("transponder.omux_file", ""),
                ("model.order", "5"),
                ("model.probe_symbols", "20000"),
                ("model.window", "16"),
                ("model.ridge", "1e-8"),
                ("model.regularization", "0"),
                ("detector.kinds", "cs,trunc"),
                ("detector.memories", "1,2"),
                ("detector.noise_scales", "1"),
                ("air.psat_n0_db", "9,12"),
                ("air.symbols", "10000"),
                ("air.blocks", "10"),
            ],
            Self::SzegoCheck => {
                &[("channel.taps", "epr4"), ("design.snr_db", "6"), ("design.sizes", "16,32,64,128,256,512,1024")]
            }
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Self::DesignCs, Self::AirCurve, Self::TxfilterOpt, Self::Pack, Self::SatelliteSim, Self::SzegoCheck]
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown experiment '{}'", s.trim())))
    }
}

/// One `key = value` line of a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct IniEntry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses `[section]` headers and `key = value` lines; `#` and `;` start comments.
pub fn parse_ini(text: &str, path: &Path) -> Result<Vec<IniEntry>> {
    let err = |line: usize, msg: String| Error::Config { path: path.to_path_buf(), line, msg };
    let mut section = String::new();
    let mut out: Vec<IniEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split(['#', ';']).next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| err(line, "unterminated section header".into()))?.trim();
            if name.is_empty() || name.contains(['[', ']', '=']) {
                return Err(err(line, format!("bad section name '{name}'")));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| err(line, format!("expected 'key = value', got '{s}'")))?;
        let key = k.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(err(line, format!("bad key '{key}'")));
        }
        if let Some(prev) = out.iter().find(|e| e.section == section && e.key == key) {
            return Err(err(line, format!("duplicate key '{key}' (first on line {})", prev.line)));
        }
        out.push(IniEntry { section: section.clone(), key: key.to_string(), value: v.trim().to_string(), line });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
enum Origin {
    Default,
    File(usize),
    Flag,
}

#[derive(Clone, Debug)]
struct Value {
    text: String,
    origin: Origin,
}

/// Fully resolved experiment: schema defaults, then file entries, then flags.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: PathBuf,
    path: PathBuf,
    values: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    /// `overrides` are `section.key=value` strings.
    pub fn resolve(
        kind: Option<ExperimentKind>,
        file: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self> {
        let path = file.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<command line>"));
        let entries = match file {
            Some(f) => {
                let text = std::fs::read_to_string(f).map_err(|source| Error::Io { path: f.to_path_buf(), source })?;
                parse_ini(&text, f)?
            }
            None => Vec::new(),
        };
        let cfg_err = |line: usize, msg: String| Error::Config { path: path.clone(), line, msg };
        let top = |key: &str| entries.iter().find(|e| e.section.is_empty() && e.key == key);
        let kind = match (kind, top("experiment")) {
            (Some(k), Some(e)) if e.value != k.name() => {
                return Err(cfg_err(e.line, format!("config is for '{}', command is '{}'", e.value, k.name())))
            }
            (Some(k), _) => k,
            (None, Some(e)) => e.value.parse().map_err(|x: Error| cfg_err(e.line, x.to_string()))?,
            (None, None) => return Err(cfg_err(0, "no experiment kind given".into())),
        };
        let mut values: BTreeMap<String, Value> = kind
            .schema()
            .iter()
            .map(|(k, d)| (k.to_string(), Value { text: d.to_string(), origin: Origin::Default }))
            .collect();
        let mut file_seed = None;
        let mut file_out = None;
        for e in &entries {
            if e.section.is_empty() {
                match e.key.as_str() {
                    "experiment" => {}
                    "seed" => {
                        file_seed = Some(
                            e.value.parse::<u64>().map_err(|_| cfg_err(e.line, format!("bad seed '{}'", e.value)))?,
                        )
                    }
                    "out" => file_out = Some(PathBuf::from(&e.value)),
                    other => return Err(cfg_err(e.line, format!("unknown top-level key '{other}'"))),
                }
                continue;
            }
            let key = format!("{}.{}", e.section, e.key);
            let Some(slot) = values.get_mut(&key) else {
                return Err(cfg_err(e.line, format!("unknown key '{key}' for {}", kind.name())));
            };
            *slot = Value { text: e.value.clone(), origin: Origin::File(e.line) };
        }
        for o in overrides {
            let flag_err = |msg: String| Error::Config { path: PathBuf::from("<command line>"), line: 0, msg };
            let (k, v) = o.split_once('=').ok_or_else(|| flag_err(format!("override '{o}' is not key=value")))?;
            let slot = values
                .get_mut(k.trim())
                .ok_or_else(|| flag_err(format!("unknown key '{}' for {}", k.trim(), kind.name())))?;
            *slot = Value { text: v.trim().to_string(), origin: Origin::Flag };
        }
        Ok(Self {
            kind,
            seed: seed.or(file_seed).unwrap_or(1),
            out: out.or(file_out).unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.name()))),
            path,
            values,
        })
    }

    /// Canonical text of the resolved config, one `key = value` per line.
    pub fn canonical(&self) -> String {
        let mut s = format!("experiment = {}\nseed = {}\n", self.kind.name(), self.seed);
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {}", v.text);
        }
        s
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn error(&self, key: &str, msg: String) -> Error {
        let v = &self.values[key];
        let (path, line) = match v.origin {
            Origin::File(l) => (self.path.clone(), l),
            Origin::Flag => (PathBuf::from("<command line>"), 0),
            Origin::Default => (PathBuf::from("<default>"), 0),
        };
        Error::Config { path, line, msg: format!("{key}: {msg}") }
    }

    fn text(&self, key: &str) -> &str {
        &self.values.get(key).unwrap_or_else(|| panic!("'{key}' missing from the schema")).text
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let t = self.text(key);
        t.parse().map_err(|_| self.error(key, format!("cannot parse '{t}'")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.text(key)
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| self.error(key, format!("cannot parse list item '{s}'"))))
            .collect()
    }

    fn parsed<T>(&self, key: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<T> {
        f(self.text(key)).map_err(|e| self.error(key, e.to_string()))
    }

    fn taps(&self, key: &str) -> Result<ChannelTaps> {
        self.parsed(key, parse_channel)
    }
}

/// Channel taps: `epr4`, `proakis-b`, or a list of complex numbers such as `0.5,-0.5j,1+2j`.
pub fn parse_channel(s: &str) -> Result<ChannelTaps> {
    match s.trim() {
        "epr4" => return Ok(ChannelTaps::epr4()),
        "proakis-b" => return Ok(ChannelTaps::proakis_b()),
        _ => {}
    }
    let taps = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<C64>().map_err(|_| Error::InvalidInput(format!("bad tap '{t}'"))))
        .collect::<Result<Vec<_>>>()?;
    ChannelTaps::new(taps)
}

fn n0_of(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Output of one experiment: main CSV body plus extra metadata and side artifacts.
pub struct Artifacts {
    pub body: String,
    pub notes: Vec<String>,
    /// `(suffix, body)` written next to the main output as `<stem>_<suffix>.csv`.
    pub extra: Vec<(String, String)>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut notes = Vec::new();
    let mut extra = Vec::new();
    let body = match cfg.kind {
        ExperimentKind::DesignCs => {
            let h = cfg.taps("channel.taps")?;
            let d = design_scalar_cs_for_channel(&h, n0_of(cfg.get("design.snr_db")?), cfg.get("design.memory")?)?;
            let fe = realize_front_end(&d.hr_spectrum()?, DEFAULT_FRONT_END_LAGS)?;
            let mut s = String::from("quantity,index,re,im\n");
            let mut row = |q: &str, i: i64, v: C64| {
                let _ = writeln!(s, "{q},{i},{:.12e},{:.12e}", v.re, v.im);
            };
            for (i, v) in d.b.iter().enumerate() {
                row("b", i as i64, *v);
            }
            for (i, v) in d.gr.taps().iter().enumerate() {
                row("gr", i as i64, *v);
            }
            for (i, v) in fe.taps().iter().enumerate() {
                row("hr", fe.first_lag() + i as i64, *v);
            }
            row("c_opt", 0, C64::new(d.c_opt, 0.0));
            row("i_opt", 0, C64::new(d.i_opt, 0.0));
            s
        }
        ExperimentKind::AirCurve => {
            let h = cfg.taps("channel.taps")?;
            let modulation: Modulation = cfg.get("channel.modulation")?;
            let alphabet = Alphabet::scalar(&Constellation::new(modulation))?;
            let kinds: Vec<String> = cfg.list("detector.kinds")?;
            let memory: usize = cfg.get("detector.memory")?;
            let pre: usize = cfg.get("detector.prefilter_taps")?;
            let air = AirConfig::new(cfg.get("air.symbols")?, cfg.get("air.blocks")?, cfg.seed);
            let mut s = String::from("snr_db,detector,L,air,se\n");
            for (job, snr) in cfg.list::<f64>("air.snr_db")?.into_iter().enumerate() {
                let n0 = n0_of(snr);
                let sim = ForneyModel::new(h.clone(), n0)?;
                for kind in &kinds {
                    let (law, l): (DetectionLaw, usize) = match kind.as_str() {
                        "exact" => (ForneyLaw::scalar(&h, n0)?.into(), h.memory()),
                        other => {
                            let k: ShortenerKind =
                                other.parse().map_err(|e: Error| cfg.error("detector.kinds", e.to_string()))?;
                            let law = match k {
                                ShortenerKind::Cs => design_scalar_cs_for_channel(&h, n0, memory)?
                                    .law_for_forney(DEFAULT_FRONT_END_LAGS)?,
                                ShortenerKind::Truncation => truncation_law_forney(&h, n0, memory, 1.0)?,
                                ShortenerKind::MmseLegacy => mmse_legacy_cs(&h, n0, memory, pre)?.law,
                            };
                            (law.into(), memory)
                        }
                    };
                    let est = mc_air_trellis(&sim, &law, &alphabet, &air.for_job(job as u64))?;
                    let _ = writeln!(s, "{snr},{kind},{l},{:.6},{:.6}", est.value, est.std_error);
                }
            }
            s
        }
        ExperimentKind::TxfilterOpt => {
            let h = cfg.taps("channel.taps")?;
            let opts = TxOptions { multistart: cfg.get("design.multistart")?, seed: cfg.seed, ..TxOptions::default() };
            let power = h.power_spectrum(DEFAULT_GRID)?;
            let t = optimize_transmit_filter(&power, cfg.get("design.n0")?, cfg.get("design.memory")?, &opts)?;
            notes.push(format!("objective = {:.9}", t.objective));
            notes.push(format!("flat_objective = {:.9}", t.flat_objective));
            notes.push(format!("flat_fallback = {}", t.flat_fallback()));
            extra.push(("psd".to_string(), t.spectrum_csv()));
            t.coefficients_csv()
        }
        ExperimentKind::Pack => {
            let budget: f64 = cfg.get("grid.budget_s")?;
            let pc = PackingConfig {
                modulation: cfg.get("signal.modulation")?,
                rolloff: cfg.get("signal.rolloff")?,
                span: cfg.get("signal.span")?,
                oversampling: cfg.get("signal.oversampling")?,
                detector: cfg.parsed("detector.kind", |name| {
                    PackingDetector::parse(
                        name,
                        cfg.get("detector.memory")?,
                        cfg.get("detector.mmse_taps")?,
                        cfg.get("detector.mmse_oversampling")?,
                    )
                })?,
                rails: cfg.get("signal.rails")?,
                taus: cfg.list("grid.taus")?,
                nus: cfg.list("grid.nus")?,
                widths: cfg.list("grid.widths")?,
                esn0_db: cfg.list("grid.esn0_db")?,
                ebn0_db: cfg.list("grid.ebn0_db")?,
                neighbors: cfg.get("signal.neighbors")?,
                air: AirConfig::new(cfg.get("air.symbols")?, cfg.get("air.blocks")?, cfg.seed),
                budget: (budget > 0.0).then(|| Duration::from_secs_f64(budget)),
            };
            let r = optimize_ase(&pc)?;
            if r.budget_exceeded {
                eprintln!("warning: runtime budget exceeded; grid is partial");
                notes.push("budget_exceeded = true".into());
            }
            extra.push(("summary".to_string(), r.summary_csv()));
            r.grid_csv()
        }
        ExperimentKind::SatelliteSim => {
            let os: usize = cfg.get("transponder.oversampling")?;
            let file_taps = |key: &str| -> Result<Option<Vec<C64>>> {
                match cfg.text(key) {
                    "" => Ok(None),
                    p => read_filter_file(Path::new(p), os).map(Some).map_err(|e| cfg.error(key, e.to_string())),
                }
            };
            let modulation: Modulation = cfg.get("signal.modulation")?;
            let sc = SatelliteConfig {
                modulation,
                rolloff: cfg.get("signal.rolloff")?,
                span: cfg.get("signal.span")?,
                oversampling: os,
                ibo_db: cfg.get("transponder.ibo_db")?,
                imux: MuxFilterDesign { bandwidth: cfg.get("transponder.imux_bandwidth")?, ..MuxFilterDesign::imux() },
                omux: MuxFilterDesign { bandwidth: cfg.get("transponder.omux_bandwidth")?, ..MuxFilterDesign::omux() },
                imux_taps: file_taps("transponder.imux_file")?,
                omux_taps: file_taps("transponder.omux_file")?,
                order: cfg.get("model.order")?,
                probe: VolterraProbe {
                    modulation,
                    symbols: cfg.get("model.probe_symbols")?,
                    seed: cfg.seed,
                    ridge: cfg.get("model.ridge")?,
                    window: cfg.get("model.window")?,
                },
                regularization: cfg.get("model.regularization")?,
                psat_n0_db: cfg.list("air.psat_n0_db")?,
                detectors: cfg.list("detector.kinds")?,
                memories: cfg.list("detector.memories")?,
                noise_scales: cfg.list("detector.noise_scales")?,
                air: AirConfig::new(cfg.get("air.symbols")?, cfg.get("air.blocks")?, cfg.seed),
            };
            let r = satellite_air(&sc)?;
            if let Some(obo) = r.obo_db {
                notes.push(format!("obo_db = {obo:.4}"));
            }
            notes.push(format!("model_residual_db = {:.3}", r.residual_db));
            r.csv()
        }
        ExperimentKind::SzegoCheck => {
            let g = cfg.taps("channel.taps")?.autocorrelation();
            let n0 = n0_of(cfg.get("design.snr_db")?);
            let mut s = String::from("n,finite\n");
            let mut limit = 0.0;
            for n in cfg.list::<usize>("design.sizes")? {
                let (f, a) = szego_logdet(&g, n, n0)?;
                limit = a;
                let _ = writeln!(s, "{n},{f:.12}");
            }
            notes.push(format!("asymptotic = {limit:.12}"));
            s
        }
    };
    Ok(Artifacts { body, notes, extra })
}

/// `#` header: version, config hash, seed, resolved config and run notes.
pub fn header(cfg: &ExperimentConfig, notes: &[String]) -> String {
    let mut s =
        format!("# chanshort {}\n# config_sha256 {}\n# seed {}\n", env!("CARGO_PKG_VERSION"), cfg.hash(), cfg.seed);
    for line in cfg.canonical().lines() {
        let _ = writeln!(s, "# {line}");
    }
    for n in notes {
        let _ = writeln!(s, "# {n}");
    }
    s
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn side_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// Resolves, runs and writes every artifact; returns the written paths.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let a = run_experiment(cfg)?;
    let head = header(cfg, &a.notes);
    write_atomic(&cfg.out, &format!("{head}{}", a.body))?;
    let mut paths = vec![cfg.out.clone()];
    for (suffix, body) in &a.extra {
        let p = side_path(&cfg.out, suffix);
        write_atomic(&p, &format!("{head}{body}"))?;
        paths.push(p);
    }
    Ok(paths)
}

#[derive(Parser, Debug)]
#[command(name = "chanshort", version, about = "Channel-shortening detector design and rate experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Config file with `[section]` headers and `key = value` lines.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Override any config key: `--set section.key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form CS design: b, Gr, Hr and I_OPT.
    DesignCs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        taps: Option<String>,
        #[arg(long = "L", alias = "memory")]
        memory: Option<usize>,
        #[arg(long = "snr", allow_hyphen_values = true)]
        snr_db: Option<f64>,
    },
    /// Monte Carlo AIR versus SNR for exact and reduced detectors.
    AirCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        taps: Option<String>,
        #[arg(long = "mod")]
        modulation: Option<String>,
        #[arg(long)]
        detector: Option<String>,
        #[arg(long = "L", alias = "memory")]
        memory: Option<usize>,
    },
    /// Transmit-spectrum optimization for a CS receiver.
    TxfilterOpt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        taps: Option<String>,
        #[arg(long = "L", alias = "memory")]
        memory: Option<usize>,
        #[arg(long)]
        n0: Option<f64>,
    },
    /// Time/frequency packing grid search.
    Pack {
        #[command(flatten)]
        common: Common,
        #[arg(long = "mod")]
        modulation: Option<String>,
        #[arg(long)]
        detector: Option<String>,
        #[arg(long = "L", alias = "memory")]
        memory: Option<usize>,
    },
    /// AIR on the nonlinear satellite channel.
    SatelliteSim {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        ibo: Option<f64>,
        #[arg(long = "mod")]
        modulation: Option<String>,
        #[arg(long)]
        detector: Option<String>,
        #[arg(long = "L", alias = "memory")]
        memory: Option<String>,
    },
    /// Finite-N versus asymptotic log-determinant table.
    SzegoCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        taps: Option<String>,
    },
    /// Runs the experiment named by the config's `experiment` key.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn parts(self) -> (Option<ExperimentKind>, Common, Vec<String>) {
        let mut flags = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.push(format!("{k}={v}"));
            }
        };
        let s = |v: Option<usize>| v.map(|x| x.to_string());
        let f = |v: Option<f64>| v.map(|x| x.to_string());
        let (kind, common) = match self {
            Command::DesignCs { common, taps, memory, snr_db } => {
                put("channel.taps", taps);
                put("design.memory", s(memory));
                put("design.snr_db", f(snr_db));
                (Some(ExperimentKind::DesignCs), common)
            }
            Command::AirCurve { common, taps, modulation, detector, memory } => {
                put("channel.taps", taps);
                put("channel.modulation", modulation);
                put("detector.kinds", detector);
                put("detector.memory", s(memory));
                (Some(ExperimentKind::AirCurve), common)
            }
            Command::TxfilterOpt { common, taps, memory, n0 } => {
                put("channel.taps", taps);
                put("design.memory", s(memory));
                put("design.n0", f(n0));
                (Some(ExperimentKind::TxfilterOpt), common)
            }
            Command::Pack { common, modulation, detector, memory } => {
                put("signal.modulation", modulation);
                put("detector.kind", detector);
                put("detector.memory", s(memory));
                (Some(ExperimentKind::Pack), common)
            }
            Command::SatelliteSim { common, ibo, modulation, detector, memory } => {
                put("transponder.ibo_db", f(ibo));
                put("signal.modulation", modulation);
                put("detector.kinds", detector);
                put("detector.memories", memory);
                (Some(ExperimentKind::SatelliteSim), common)
            }
            Command::SzegoCheck { common, taps } => {
                put("channel.taps", taps);
                (Some(ExperimentKind::SzegoCheck), common)
            }
            Command::Run { common } => (None, common),
        };
        let mut overrides = flags;
        overrides.extend(common.set.iter().cloned());
        (kind, common, overrides)
    }
}

/// Entry point shared by the binary and tests. Exit codes: 0 ok, 1 module error, 2 usage or config error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (kind, common, overrides) = cli.command.parts();
    let cfg =
        match ExperimentConfig::resolve(kind, common.config.as_deref(), &overrides, common.seed, common.out.clone()) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads.filter(|&n| n > 0) {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| run(&cfg)) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            0
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("t.ini")
    }

    #[test]
    fn ini_sections_and_comments() {
        let e = parse_ini("experiment = pack\n# note\n[grid]\ntaus = 0.8, 0.9 ; inline\n\n[air]\nsymbols=5\n", &p())
            .unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(
            (e[1].section.as_str(), e[1].key.as_str(), e[1].value.as_str(), e[1].line),
            ("grid", "taus", "0.8, 0.9", 4)
        );
        assert_eq!(e[2].line, 7);
    }

    #[test]
    fn ini_errors_carry_line_numbers() {
        for (text, line) in [("[a]\nno equals\n", 2), ("[a\n", 1), ("[a]\nx=1\nx=2\n", 3), ("[]\n", 1)] {
            match parse_ini(text, &p()) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn resolution_order_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.ini");
        std::fs::write(&f, "seed = 9\n[design]\nmemory = 2\nsnr_db = 3\n").unwrap();
        let c = ExperimentConfig::resolve(
            Some(ExperimentKind::DesignCs),
            Some(&f),
            &["design.snr_db=4".into()],
            None,
            None,
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.get::<usize>("design.memory").unwrap(), 2);
        assert_eq!(c.get::<f64>("design.snr_db").unwrap(), 4.0);
        assert_eq!(c.text("channel.taps"), "epr4");
        std::fs::write(&f, "[design]\nmemory = 2\nbogus = 1\n").unwrap();
        match ExperimentConfig::resolve(Some(ExperimentKind::DesignCs), Some(&f), &[], None, None) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&f, "[design]\nmemory = two\n").unwrap();
        let c = ExperimentConfig::resolve(Some(ExperimentKind::DesignCs), Some(&f), &[], None, None).unwrap();
        match c.get::<usize>("design.memory") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_tracks_resolved_values() {
        let a = ExperimentConfig::resolve(Some(ExperimentKind::SzegoCheck), None, &[], Some(1), None).unwrap();
        let b = ExperimentConfig::resolve(
            Some(ExperimentKind::SzegoCheck),
            None,
            &["design.snr_db=6".into()],
            Some(1),
            None,
        )
        .unwrap();
        let c = ExperimentConfig::resolve(Some(ExperimentKind::SzegoCheck), None, &[], Some(2), None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn channel_syntax() {
        assert_eq!(parse_channel("epr4").unwrap().taps(), ChannelTaps::epr4().taps());
        let h = parse_channel("0.5, 0.5 -0.5 -0.5j").unwrap();
        assert_eq!(h.taps()[3], C64::new(0.0, -0.5));
        assert!(parse_channel("0.5,x").is_err());
    }

    #[test]
    fn design_cs_matches_library_call() {
        let c = ExperimentConfig::resolve(Some(ExperimentKind::DesignCs), None, &[], None, None).unwrap();
        let a = run_experiment(&c).unwrap();
        let d = design_scalar_cs_for_channel(&ChannelTaps::epr4(), n0_of(6.0), 1).unwrap();
        let line = a.body.lines().find(|l| l.starts_with("i_opt,")).unwrap();
        let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((v - d.i_opt).abs() < 1e-10);
        assert!(a.body.lines().filter(|l| l.starts_with("b,")).count() == 2);
    }

    #[test]
    fn szego_table_is_two_columns_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("s.csv");
        let c =
            ExperimentConfig::resolve(Some(ExperimentKind::SzegoCheck), None, &[], Some(3), Some(out.clone())).unwrap();
        run(&c).unwrap();
        let first = std::fs::read_to_string(&out).unwrap();
        run(&c).unwrap();
        assert_eq!(first, std::fs::read_to_string(&out).unwrap());
        assert!(first.starts_with("# chanshort "));
        let rows: Vec<&str> = first.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "n,finite");
        assert!(rows[1..].iter().all(|r| r.split(',').count() == 2));
        assert_eq!(rows.len(), 8);
    }
}
