//! Run configuration: one JSON document with a section per subcommand.

use std::path::{Path, PathBuf};

use nlcoupler::calibration::{FitOptions, FitParam};
use nlcoupler::circuit::CircuitParams;
use nlcoupler::effective::EffectiveOptions;
use nlcoupler::hamiltonian::FockConfig;
use nlcoupler::spectroscopy::{JSource, Retune};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A preset name ("fitted", "nominal"), a path to a parameter file, or the
/// parameters inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSource {
    Named(String),
    Inline(CircuitParams),
}

impl Default for ParamsSource {
    fn default() -> Self {
        ParamsSource::Named("fitted".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

/// Sweep values, listed or as an inclusive linear range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    Values(Vec<f64>),
    Range(LinearRange),
}

impl Sweep {
    pub fn range(start: f64, stop: f64, points: usize) -> Self {
        Sweep::Range(LinearRange { start, stop, points })
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::Values(v) => v.clone(),
            Sweep::Range(r) if r.points == 1 => vec![r.start],
            Sweep::Range(r) => (0..r.points)
                .map(|k| r.start + (r.stop - r.start) * k as f64 / (r.points - 1) as f64)
                .collect(),
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        let v = self.values();
        if v.is_empty() {
            return Err(CliError::Config(format!("{name}: sweep is empty")));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config(format!("{name}: sweep values must be finite")));
        }
        let up = v.windows(2).all(|w| w[1] > w[0]);
        let down = v.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(CliError::Config(format!("{name}: sweep must be strictly monotone")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesSection {
    pub phi3: Sweep,
}

impl Default for ModesSection {
    fn default() -> Self {
        Self { phi3: Sweep::range(0.0, 0.5, 101) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub phi3: Sweep,
    /// Eigenpairs kept per point, ground state included.
    pub levels: usize,
    pub retune: Retune,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { phi3: Sweep::range(0.0, 0.5, 51), levels: 8, retune: Retune::Fixed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingsSection {
    pub phi3: Sweep,
    pub options: EffectiveOptions,
}

impl Default for CouplingsSection {
    fn default() -> Self {
        Self { phi3: Sweep::range(0.0, 0.5, 101), options: EffectiveOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingSection {
    /// Qubit 1 flux; Φ₃ comes from the parameters.
    pub phi1: Sweep,
    /// Qubit 2 parking flux, overriding the parameters.
    pub phi2: f64,
}

impl Default for CrossingSection {
    fn default() -> Self {
        Self { phi1: Sweep::range(0.07, 0.13, 25), phi2: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KerrSection {
    pub phi3: Sweep,
    pub source: JSource,
    /// Keep only the quadratic coupler term: the V = 0 reference.
    pub disable_v: bool,
}

impl Default for KerrSection {
    fn default() -> Self {
        Self { phi3: Sweep::range(0.0, 0.25, 11), source: JSource::Effective, disable_v: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// CSV with columns flux_channel, flux_value, transition, freq_ghz[, weight].
    pub data: PathBuf,
    #[serde(default = "table_params")]
    pub free: Vec<FitParam>,
    #[serde(default)]
    pub options: FitOptions,
}

fn table_params() -> Vec<FitParam> {
    FitParam::TABLE.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCrosstalk {
    /// Rows map applied fluxes to effective (Φ₁, Φ₂, Φ₃).
    pub matrix: [[f64; 3]; 3],
    #[serde(default)]
    pub offsets: [f64; 3],
    /// Foreign-channel settings visited for each tracked flux.
    pub settings: Vec<f64>,
    /// Gaussian noise on the sweetspot offsets, flux quanta.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    /// CSV with columns tracked (1-3), offset, applied_1, applied_2, applied_3.
    #[serde(default)]
    pub observations: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticCrosstalk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), format: Format::Csv }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ParamsSource,
    pub fock: FockConfig,
    pub seed: u64,
    pub threads: Option<usize>,
    pub modes: ModesSection,
    pub spectrum: SpectrumSection,
    pub couplings: CouplingsSection,
    pub crossing: CrossingSection,
    pub kerr: KerrSection,
    pub fit: Option<FitSection>,
    pub calibrate: Option<CalibrateSection>,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ParamsSource::default(),
            fock: FockConfig::uniform(10),
            seed: 0,
            threads: None,
            modes: ModesSection::default(),
            spectrum: SpectrumSection::default(),
            couplings: CouplingsSection::default(),
            crossing: CrossingSection::default(),
            kerr: KerrSection::default(),
            fit: None,
            calibrate: None,
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Modes,
    Spectrum,
    Couplings,
    Crossing,
    Kerr,
    Fit,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Modes => "modes",
            Command::Spectrum => "spectrum",
            Command::Couplings => "couplings",
            Command::Crossing => "crossing",
            Command::Kerr => "kerr",
            Command::Fit => "fit",
            Command::Calibrate => "calibrate",
        }
    }
}

fn parse_error(origin: &str, text: &str, e: serde_json::Error) -> CliError {
    let line = e.line();
    let snippet = text.lines().nth(line.saturating_sub(1)).unwrap_or("").trim();
    CliError::Config(format!("{origin}, line {line}: {e} (near `{snippet}`)"))
}

impl RunConfig {
    /// Parses a config document; relative paths resolve against `base`.
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| parse_error(origin, text, e))?;
        cfg.params = ParamsSource::Inline(resolve_params(&cfg.params, base)?);
        if let Some(fit) = &mut cfg.fit {
            fit.data = base.join(&fit.data);
        }
        if let Some(cal) = &mut cfg.calibrate {
            if let Some(p) = &mut cal.observations {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn params(&self) -> CircuitParams {
        match &self.params {
            ParamsSource::Inline(p) => *p,
            ParamsSource::Named(_) => unreachable!("parameters are resolved on load"),
        }
    }

    /// SHA-256 of the resolved config. Output location and thread count do
    /// not change results and are left out.
    pub fn hash(&self) -> String {
        let key = RunConfig { threads: None, output: OutputSection::default(), ..self.clone() };
        let bytes = serde_json::to_vec(&key).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything `command` needs before any computation starts.
    pub fn validate(&self, command: Command) -> Result<()> {
        let cfg_err = |e: nlcoupler::Error| CliError::Config(e.to_string());
        self.params().validate().map_err(cfg_err)?;
        self.fock.validate().map_err(cfg_err)?;
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        match command {
            Command::Modes => self.modes.phi3.check("modes.phi3")?,
            Command::Spectrum => {
                self.spectrum.phi3.check("spectrum.phi3")?;
                let levels = self.spectrum.levels;
                if levels < 2 || levels > self.fock.dim() {
                    return Err(CliError::Config(format!(
                        "spectrum.levels must lie in 2..={}, got {levels}",
                        self.fock.dim()
                    )));
                }
            }
            Command::Couplings => self.couplings.phi3.check("couplings.phi3")?,
            Command::Crossing => {
                self.crossing.phi1.check("crossing.phi1")?;
                if self.crossing.phi1.values().len() < 5 {
                    return Err(CliError::Config("crossing.phi1 needs at least 5 points".into()));
                }
                if !self.crossing.phi2.is_finite() {
                    return Err(CliError::Config("crossing.phi2 must be finite".into()));
                }
            }
            Command::Kerr => {
                self.kerr.phi3.check("kerr.phi3")?;
                if let JSource::CrossingFit { phi1 } = &self.kerr.source {
                    Sweep::Values(phi1.clone()).check("kerr.source.crossing_fit.phi1")?;
                }
            }
            Command::Fit => {
                let fit = self.fit.as_ref().ok_or_else(|| CliError::Config("missing `fit` section".into()))?;
                if !fit.data.is_file() {
                    return Err(CliError::Config(format!("fit.data: no such file {}", fit.data.display())));
                }
                if let nlcoupler::calibration::ForwardModel::Full { fock } = fit.options.model {
                    fock.validate().map_err(cfg_err)?;
                }
            }
            Command::Calibrate => {
                let cal = self
                    .calibrate
                    .as_ref()
                    .ok_or_else(|| CliError::Config("missing `calibrate` section".into()))?;
                match (&cal.observations, &cal.synthetic) {
                    (Some(p), None) => {
                        if !p.is_file() {
                            return Err(CliError::Config(format!(
                                "calibrate.observations: no such file {}",
                                p.display()
                            )));
                        }
                    }
                    (None, Some(s)) => {
                        if s.settings.len() < 2 {
                            return Err(CliError::Config("calibrate.synthetic.settings needs at least 2 values".into()));
                        }
                        if !(s.noise.is_finite() && s.noise >= 0.0) {
                            return Err(CliError::Config("calibrate.synthetic.noise must be non-negative".into()));
                        }
                    }
                    _ => {
                        return Err(CliError::Config(
                            "calibrate needs exactly one of `observations` and `synthetic`".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

fn resolve_params(src: &ParamsSource, base: &Path) -> Result<CircuitParams> {
    match src {
        ParamsSource::Inline(p) => Ok(*p),
        ParamsSource::Named(name) if name == "fitted" => Ok(CircuitParams::fitted_device()),
        ParamsSource::Named(name) if name == "nominal" => Ok(CircuitParams::nominal_device()),
        ParamsSource::Named(path) => {
            let path = base.join(path);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("params: cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| parse_error(&path.display().to_string(), &text, e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::parse("{}", "test", Path::new(".")).unwrap();
        assert_eq!(cfg.params(), CircuitParams::fitted_device());
        assert_eq!(cfg.modes.phi3.values().len(), 101);
        cfg.validate(Command::Modes).unwrap();
    }

    #[test]
    fn unknown_field_reports_its_line() {
        let text = "{\n  \"seed\": 1,\n  \"sede\": 2\n}";
        let err = RunConfig::parse(text, "cfg.json", Path::new(".")).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn listed_and_ranged_sweeps() {
        assert_eq!(Sweep::range(0.0, 1.0, 3).values(), vec![0.0, 0.5, 1.0]);
        assert!(Sweep::Values(vec![0.0, 0.2, 0.1]).check("x").is_err());
        assert!(Sweep::Values(vec![]).check("x").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
