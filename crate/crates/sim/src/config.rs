//! TOML run configuration.
//!
//! Every field has a default, unknown keys are rejected, and parse errors
//! carry the line and column of the offending item. Site sequences are
//! described by a `kind` tag:
//!
//! ```toml
//! f = { kind = "point", site = 0, re = 0.5, im = 0.0 }
//! g = { kind = "gaussian", amplitude = 1.0, width = 2.0 }
//! u = { kind = "compact", support = 2, re = 1.0 }
//! v = { kind = "table", re = [0.1, 0.2, 0.1] }      # centred on site 0
//! ```
//!
//! Additive noise profiles attach `profile` to the first `modes` Wiener
//! processes with weights `2^{-(k-1)/2}`, `k = 1..=modes`.

use std::fs;
use std::path::{Path, PathBuf};

use lsw_core::estimators::Observable;
use lsw_core::integrator::{InitialCondition, Scheme, SimConfig, Simulation};
use lsw_core::noise::{DeltaSequence, DiffusionFamily, DiffusionKind, GainTable};
use lsw_core::system::derive_constants;
use lsw_core::truncation::CutoffLevel;
use lsw_core::{Boundary, Complex, ComplexSeq, LatticeState, RealSeq, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "LSW_OUTPUT_DIR";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSection,
    pub noise: NoiseSection,
    pub sim: SimSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// When set, the noise intensity is this fraction of the threshold `eps0`
    /// and `epsilon` is ignored.
    pub epsilon_fraction: Option<f64>,
    pub uv_coupling: bool,
    pub allow_outside_regime: bool,
    pub f: SeqSpec,
    pub g: SeqSpec,
    pub b: AdditiveSpec,
    pub gamma: AdditiveSpec,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            alpha: 1.0,
            beta: 2.0,
            lambda: 0.1,
            epsilon: 0.1,
            epsilon_fraction: None,
            uv_coupling: true,
            allow_outside_regime: false,
            f: SeqSpec::Zero,
            g: SeqSpec::Zero,
            b: AdditiveSpec::default(),
            gamma: AdditiveSpec::default(),
        }
    }
}

/// A sequence on `-M..=M`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeqSpec {
    #[default]
    Zero,
    /// A single nonzero site.
    Point {
        #[serde(default)]
        site: i64,
        #[serde(default)]
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// The constant `re + i im` on `|m| <= support`.
    Compact {
        support: usize,
        #[serde(default)]
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// `amplitude exp(-(m - center)^2 / (2 width^2)) e^{i phase}`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: i64,
        #[serde(default)]
        phase: f64,
    },
    /// Explicit values for the sites `-L..=L`, `2L + 1` entries, zero elsewhere.
    Table {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

impl SeqSpec {
    pub fn complex(&self, radius: usize) -> Result<ComplexSeq> {
        let r = radius as i64;
        let seq = match self {
            SeqSpec::Zero => ComplexSeq::zeros(radius),
            SeqSpec::Point { site, re, im } => {
                if site.abs() > r {
                    return Err(SimError::Config(format!("site {site} lies outside radius {radius}")));
                }
                ComplexSeq::unit(radius, *site, Complex::new(*re, *im))
            }
            SeqSpec::Compact { support, re, im } => ComplexSeq::from_fn(radius, |m| {
                if m.unsigned_abs() as usize <= *support {
                    Complex::new(*re, *im)
                } else {
                    Complex::new(0.0, 0.0)
                }
            }),
            SeqSpec::Gaussian {
                amplitude,
                width,
                center,
                phase,
            } => {
                if !(*width > 0.0) {
                    return Err(SimError::Config("gaussian width must be positive".into()));
                }
                ComplexSeq::from_fn(radius, |m| {
                    let d = (m - center) as f64;
                    Complex::from_polar(amplitude * (-d * d / (2.0 * width * width)).exp(), *phase)
                })
            }
            SeqSpec::Table { re, im } => {
                if re.len() % 2 == 0 || re.len() > 2 * radius + 1 {
                    return Err(SimError::Config(format!(
                        "table needs an odd number of entries at most {}, got {}",
                        2 * radius + 1,
                        re.len()
                    )));
                }
                if !im.is_empty() && im.len() != re.len() {
                    return Err(SimError::Config("table re and im lengths differ".into()));
                }
                let half = (re.len() / 2) as i64;
                ComplexSeq::from_fn(radius, |m| {
                    if m.abs() > half {
                        return Complex::new(0.0, 0.0);
                    }
                    let i = (m + half) as usize;
                    Complex::new(re[i], im.get(i).copied().unwrap_or(0.0))
                })
            }
        };
        if !seq.is_finite() {
            return Err(SimError::Config("sequence contains non-finite values".into()));
        }
        Ok(seq)
    }

    pub fn real(&self, radius: usize) -> Result<RealSeq> {
        let c = self.complex(radius)?;
        if c.values().iter().any(|z| z.im != 0.0) {
            return Err(SimError::Config("a real sequence cannot have an imaginary part".into()));
        }
        Ok(RealSeq::from_fn(radius, |m| c.get(m).re))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdditiveSpec {
    pub modes: usize,
    pub profile: SeqSpec,
}

impl AdditiveSpec {
    fn weights(&self) -> impl Iterator<Item = f64> {
        (0..self.modes).map(|k| 2f64.powf(-(k as f64) / 2.0))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Zero,
    LinearSaturating,
    #[default]
    SineBounded,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub kind: FamilyKind,
    pub gain: f64,
    pub offset: f64,
    pub table_radii: Vec<f64>,
    pub table_gains: Vec<f64>,
    /// Target `||delta||^2` of the separable profile.
    pub delta_norm_sq: f64,
    pub modes: usize,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            kind: FamilyKind::SineBounded,
            gain: 1.0,
            offset: 0.0,
            table_radii: vec![0.0, 1.0],
            table_gains: vec![1.0, 0.5],
            delta_norm_sq: 0.5,
            modes: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    EulerMaruyama,
    ExpEulerMaruyama,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    #[default]
    Zero,
    Periodic,
}

impl From<BoundaryName> for Boundary {
    fn from(b: BoundaryName) -> Self {
        match b {
            BoundaryName::Zero => Boundary::Zero,
            BoundaryName::Periodic => Boundary::Periodic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub radius: usize,
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub scheme: SchemeName,
    pub boundary: BoundaryName,
    pub cutoff: Option<f64>,
    /// Levels whose first exit times are recorded.
    pub cutoff_ladder: Vec<f64>,
    pub record_stride: u64,
    pub tail_radii: Vec<usize>,
    pub initial: InitialSection,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            radius: 16,
            dt: 1e-3,
            horizon: 1.0,
            n_paths: 100,
            scheme: SchemeName::EulerMaruyama,
            boundary: BoundaryName::Zero,
            cutoff: None,
            cutoff_ladder: Vec::new(),
            record_stride: 10,
            tail_radii: Vec::new(),
            initial: InitialSection::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub u: SeqSpec,
    pub v: SeqSpec,
    pub random_amplitude: f64,
    pub random_support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Defaults to `5 / kappa`.
    pub burn_in: Option<f64>,
    /// Defaults to `50 / kappa`.
    pub avg_time: Option<f64>,
    pub observables: Vec<String>,
    pub bins: usize,
    /// Largest total-variation change of a histogram when the averaging
    /// window doubles.
    pub cauchy_tolerance: f64,
    pub bootstrap_resamples: usize,
    pub eps_pairs: Vec<[f64; 2]>,
    pub eps_list: Vec<f64>,
    pub operator_samples: usize,
    pub operator_radius: usize,
    pub cutoff_samples: usize,
    /// Relative tolerance of the short-wave mean against the dense propagator.
    pub oracle_tolerance: f64,
    /// Allowed deviation of the long-wave statistics, in standard errors.
    pub oracle_sigmas: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            burn_in: None,
            avg_time: None,
            observables: Observable::DEFAULTS.iter().map(|o| o.name().to_string()).collect(),
            bins: 50,
            cauchy_tolerance: 0.1,
            bootstrap_resamples: 200,
            eps_pairs: vec![[0.02, 0.0], [0.04, 0.0], [0.08, 0.0], [0.16, 0.0]],
            eps_list: vec![0.0, 0.02, 0.05, 0.1, 0.15, 0.25],
            operator_samples: 1000,
            operator_radius: 64,
            cutoff_samples: 100_000,
            oracle_tolerance: 1e-10,
            oracle_sigmas: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Falls back to `$LSW_OUTPUT_DIR`, then to `lsw-out`.
    pub dir: Option<PathBuf>,
    /// Write the binary trajectory file in `simulate`.
    pub trajectory: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            trajectory: true,
        }
    }
}

/// Everything needed to build simulations from a configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub params: SystemParams,
    pub family: DiffusionFamily,
    pub sim_config: SimConfig,
    pub init: InitialCondition,
    pub observables: Vec<Observable>,
}

impl Resolved {
    pub fn simulation(&self) -> Result<Simulation> {
        Ok(Simulation::new(
            self.sim_config.clone(),
            self.params.clone(),
            self.family.clone(),
            self.init.clone(),
        )?)
    }
}

impl RunConfig {
    /// Parses a document; `overrides` are `dotted.key=value` assignments
    /// whose values use TOML syntax (bare words are taken as strings).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return toml::from_str(text).map_err(|e| SimError::Config(e.to_string()));
        }
        let mut table: toml::Table = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let merged = toml::to_string(&table).map_err(|e| SimError::Config(e.to_string()))?;
        toml::from_str(&merged).map_err(|e| SimError::Config(format!("after overrides: {e}")))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(SimError::io(path))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            SimError::Config(msg) => SimError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The output directory: the config value, `$LSW_OUTPUT_DIR`, or `lsw-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("lsw-out"))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let s = &self.system;
        let radius = self.sim.radius;
        let n = &self.noise;
        let kind = match n.kind {
            FamilyKind::Zero => DiffusionKind::Zero,
            FamilyKind::LinearSaturating => DiffusionKind::LinearSaturating {
                gain: n.gain,
                offset: n.offset,
            },
            FamilyKind::SineBounded => DiffusionKind::SineBounded,
            FamilyKind::Table => DiffusionKind::Table(GainTable::new(n.table_radii.clone(), n.table_gains.clone())?),
        };
        let delta = if n.kind == FamilyKind::Zero {
            DeltaSequence::zero(n.modes, radius)
        } else {
            DeltaSequence::separable(n.modes, radius, n.delta_norm_sq)?
        };
        let family = DiffusionFamily::new(kind, delta)?;

        let b_profile = s.b.profile.complex(radius)?;
        let gamma_profile = s.gamma.profile.real(radius)?;
        let mut params = SystemParams::new(s.alpha, s.beta, s.lambda, radius)
            .with_epsilon(s.epsilon)
            .with_forcing(s.f.complex(radius)?, s.g.real(radius)?)
            .with_additive_noise(
                s.b.weights().map(|w| b_profile.scaled(w)).collect(),
                s.gamma.weights().map(|w| gamma_profile.scaled(w)).collect(),
            );
        params.uv_coupling = s.uv_coupling;
        if let Some(frac) = s.epsilon_fraction {
            let d = derive_constants(&params, family.effective_delta_norm_sq())?;
            if !d.eps0.is_finite() {
                return Err(SimError::Config(
                    "epsilon_fraction needs multiplicative noise (finite eps0)".into(),
                ));
            }
            params.epsilon = frac * d.eps0;
        }

        let sim = &self.sim;
        let scheme = match sim.scheme {
            SchemeName::EulerMaruyama => Scheme::EulerMaruyama,
            SchemeName::ExpEulerMaruyama => Scheme::ExpEulerMaruyama,
        };
        let mut cfg = SimConfig::new(radius, n.modes, sim.dt, sim.horizon);
        cfg.n_paths = sim.n_paths;
        cfg.seed = n.seed;
        cfg.scheme = scheme;
        cfg.boundary = sim.boundary.into();
        cfg.cutoff = sim.cutoff.map(CutoffLevel::new).transpose()?;
        cfg.stopping_levels = sim
            .cutoff_ladder
            .iter()
            .map(|&l| CutoffLevel::new(l))
            .collect::<lsw_core::Result<_>>()?;
        cfg.record_stride = sim.record_stride;
        cfg.tail_radii = sim.tail_radii.clone();
        cfg.allow_outside_regime = s.allow_outside_regime;

        let base = LatticeState::new(sim.initial.u.complex(radius)?, sim.initial.v.real(radius)?)?;
        let mut init = InitialCondition::deterministic(base);
        if sim.initial.random_amplitude != 0.0 {
            init = init.with_random(sim.initial.random_amplitude, sim.initial.random_support);
        }

        let observables = self
            .experiment
            .observables
            .iter()
            .map(|name| Observable::parse(name).ok_or_else(|| SimError::Config(format!("unknown observable `{name}`"))))
            .collect::<Result<_>>()?;

        Ok(Resolved {
            params,
            family,
            sim_config: cfg,
            init,
            observables,
        })
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| SimError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| SimError::Config(format!("override path `{key}` crosses a non-table value")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
