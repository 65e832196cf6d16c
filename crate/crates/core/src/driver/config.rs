//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dgsolver::{BoundarySpec, ExactSolution};
use crate::error::{Error, Result};
use crate::mesh::{BandSpec, MeshSpec};
use crate::physics::{DensityWaveParams, GasModel, VortexParams};
use crate::polybasis::NodeKind;

/// Highest polynomial degree accepted by a run.
pub const MAX_DEGREE: usize = 16;

/// How ranks are hosted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Threads in the coordinating process, connected by channels.
    #[default]
    Inproc,
    /// Worker processes connected over loopback sockets.
    Proc,
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(Self::Inproc),
            "proc" => Ok(Self::Proc),
            other => Err(Error::Config(format!(
                "unknown backend '{other}' (expected inproc or proc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    /// Initial condition, reference solution and boundary data.
    pub exact: ExactSolution,
    /// `periodic` or `dirichlet-exact`.
    #[serde(default = "default_boundary")]
    pub boundary: String,
    #[serde(default)]
    pub end_time: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    /// Fixed time step instead of the CFL estimate.
    #[serde(default)]
    pub dt: Option<f64>,
}

fn default_boundary() -> String {
    "periodic".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    pub degree: usize,
    /// `lgl` or `gauss`.
    pub nodes: String,
    pub cfl: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            degree: 4,
            nodes: "lgl".into(),
            cfl: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasConfig {
    pub gamma: f64,
    pub r_gas: f64,
    pub mu: f64,
    pub prandtl: f64,
}

impl Default for GasConfig {
    fn default() -> Self {
        Self {
            gamma: 1.4,
            r_gas: 287.058,
            mu: 0.0,
            prandtl: 0.72,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParallelConfig {
    pub ranks: usize,
    pub backend: Backend,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self {
            ranks: 1,
            backend: Backend::Inproc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Write the final field as a binary snapshot.
    pub snapshot: bool,
    /// Write the message trace as CSV.
    pub trace: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            snapshot: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Refinement factors applied to the base mesh.
    pub levels: Vec<usize>,
    /// Degrees of a convergence study; empty means the run's degree.
    pub degrees: Vec<usize>,
    /// Rank counts of a scaling study.
    pub ranks: Vec<usize>,
    pub repetitions: usize,
    /// Steps per scaling run.
    pub steps: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            levels: vec![1, 2, 4],
            degrees: Vec::new(),
            ranks: vec![1, 2, 3, 4],
            repetitions: 5,
            steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub gas: GasConfig,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub parallel: ParallelConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.discretization;
        if !(1..=MAX_DEGREE).contains(&d.degree) {
            return Err(Error::Config(format!(
                "degree {} outside 1..={MAX_DEGREE}",
                d.degree
            )));
        }
        self.node_kind()?;
        if !(d.cfl > 0.0 && d.cfl.is_finite()) {
            return Err(Error::Config(format!("cfl must be positive, got {}", d.cfl)));
        }
        self.gas_model()?;
        self.boundary()?;
        let c = &self.case;
        if c.end_time.is_none() && c.n_steps.is_none() {
            return Err(Error::Config("case needs end_time or n_steps".into()));
        }
        if let Some(t) = c.end_time {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("end_time must be positive, got {t}")));
            }
        }
        if c.n_steps == Some(0) {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        if let Some(dt) = c.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
            if c.end_time.is_some() && c.n_steps.is_some() {
                return Err(Error::Config(
                    "give at most two of end_time, n_steps and dt".into(),
                ));
            }
        }
        if self.parallel.ranks == 0 {
            return Err(Error::Config("ranks must be at least 1".into()));
        }
        Ok(())
    }

    pub fn node_kind(&self) -> Result<NodeKind> {
        self.discretization.nodes.parse()
    }

    pub fn gas_model(&self) -> Result<GasModel> {
        let g = &self.gas;
        GasModel::new(g.gamma, g.r_gas, g.mu, g.prandtl)
    }

    pub fn boundary(&self) -> Result<BoundarySpec> {
        BoundarySpec::parse(&self.case.boundary, &self.case.exact)
    }

    /// Same run with every element count scaled by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut out = self.clone();
        out.mesh = self.mesh.refined(factor);
        out
    }

    /// Same mesh with every band at rest: no sliding interfaces.
    pub fn conforming(&self) -> Self {
        let mut out = self.clone();
        for b in &mut out.mesh.bands {
            b.vg2 = 0.0;
        }
        out
    }

    /// Uniform flow through a three-band mesh whose middle band slides.
    pub fn freestream(n: usize, degree: usize, vg2: f64) -> Self {
        Self::preset(
            ExactSolution::Uniform {
                rho: 1.0,
                v1: 0.6,
                v2: 0.3,
                p: 1.0 / 1.4,
            },
            MeshSpec::three_band([0.0, 2.0], n, vg2),
            degree,
        )
    }

    /// Periodic density wave on `[0, 2]^2` with a sliding middle band.
    pub fn density_wave(n: usize, degree: usize, vg2: f64) -> Self {
        Self::preset(
            ExactSolution::DensityWave(DensityWaveParams::default()),
            MeshSpec::three_band([0.0, 2.0], n, vg2),
            degree,
        )
    }

    /// Isentropic vortex in a periodic 20 x 20 box, starting in the middle
    /// band (grid velocity 2) and ending when its center reaches the second
    /// interface at `x1 = 40/3`.
    pub fn vortex(n: usize, degree: usize) -> Self {
        let params = VortexParams::default();
        let v1 = params.freestream_velocity()[0];
        let mut cfg = Self::preset(
            ExactSolution::Vortex(params),
            MeshSpec::three_band([0.0, 20.0], n, 2.0),
            degree,
        );
        cfg.case.end_time = Some((40.0 / 3.0 - params.center[0]) / v1);
        cfg
    }

    fn preset(exact: ExactSolution, mesh: MeshSpec, degree: usize) -> Self {
        Self {
            case: CaseConfig {
                exact,
                boundary: default_boundary(),
                end_time: Some(1.0),
                n_steps: None,
                dt: None,
            },
            discretization: DiscretizationConfig {
                degree,
                ..Default::default()
            },
            gas: GasConfig::default(),
            mesh,
            parallel: ParallelConfig::default(),
            output: OutputConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

/// Band layout helper for hand-written meshes.
pub fn band(n1: usize, vg2: f64) -> BandSpec {
    BandSpec { n1, n2: None, vg2 }
}
