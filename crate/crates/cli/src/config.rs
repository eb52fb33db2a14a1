use std::fs;
use std::path::{Path as FsPath, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use pathspde::io::read_path_csv;
use pathspde::{Conditioning, Grid, LinearSdeModel, ObservationModel, Path};
use serde::{Deserialize, Serialize};

pub type Matrix = Vec<Vec<f64>>;

/// On-disk run configuration. Matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub n_nodes: usize,
    pub model: Option<ModelSection>,
    pub observation: Option<ObservationSection>,
    pub conditioning: Option<ConditioningSection>,
    pub sampler: Option<SamplerSection>,
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub drift: Matrix,
    pub noise: Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub a11: Matrix,
    pub a21: Matrix,
    pub b11: Matrix,
    pub b22: Matrix,
    pub lambda: Matrix,
    pub x_minus: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningKind {
    FixedLeft,
    GaussianLeft,
    Bridge,
    Observation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSection {
    pub kind: ConditioningKind,
    pub x_minus: Option<Vec<f64>>,
    pub x_plus: Option<Vec<f64>>,
    pub sigma: Option<Matrix>,
    /// Path file holding the observation columns `y_*`; relative paths are
    /// taken from the config file's directory.
    pub y_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Theta,
    Precond,
    Kl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Theta => "theta",
            Method::Precond => "precond",
            Method::Kl => "kl",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub method: Method,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub dt: Option<f64>,
    pub n_steps: usize,
    /// Defaults to ten relaxation times of the slowest mode.
    pub burn_in: Option<usize>,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub mh: bool,
    #[serde(default = "default_true")]
    pub write_samples: bool,
    #[serde(default)]
    pub export_operator: bool,
}

fn default_theta() -> f64 {
    0.5
}

fn default_thin() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub x0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn load(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(c) = cfg.conditioning.as_mut() {
            if let Some(y) = c.y_file.as_mut() {
                if y.is_relative() {
                    let base = path.parent().unwrap_or_else(|| FsPath::new("."));
                    *y = base.join(&*y);
                }
            }
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_nodes).context("n_nodes")
    }

    pub fn kind(&self) -> Option<ConditioningKind> {
        self.conditioning.as_ref().map(|c| c.kind)
    }

    pub fn model(&self) -> Result<LinearSdeModel<f64>> {
        let m = self.model.as_ref().ok_or_else(|| anyhow!("missing [model] section"))?;
        let drift = matrix(&m.drift, "model.drift")?;
        let noise = matrix(&m.noise, "model.noise")?;
        LinearSdeModel::new(drift, noise).context("model")
    }

    /// Model with only shape checks, for forward simulation where
    /// degenerate noise is allowed.
    pub fn model_unchecked(&self) -> Result<LinearSdeModel<f64>> {
        let m = self.model.as_ref().ok_or_else(|| anyhow!("missing [model] section"))?;
        Ok(LinearSdeModel {
            drift: matrix(&m.drift, "model.drift")?,
            noise: matrix(&m.noise, "model.noise")?,
        })
    }

    pub fn observation(&self) -> Result<ObservationModel<f64>> {
        let o = self
            .observation
            .as_ref()
            .ok_or_else(|| anyhow!("missing [observation] section"))?;
        ObservationModel::new(
            matrix(&o.a11, "observation.a11")?,
            matrix(&o.a21, "observation.a21")?,
            matrix(&o.b11, "observation.b11")?,
            matrix(&o.b22, "observation.b22")?,
            matrix(&o.lambda, "observation.lambda")?,
            DVector::from_column_slice(&o.x_minus),
        )
        .context("observation")
    }

    /// The conditioning, with the observation path read from `y_file` unless
    /// `y_override` is given.
    pub fn conditioning(&self, grid: Grid, y_override: Option<&FsPath>) -> Result<Conditioning<f64>> {
        let c = self
            .conditioning
            .as_ref()
            .ok_or_else(|| anyhow!("missing [conditioning] section"))?;
        let vector = |v: &Option<Vec<f64>>, name: &str| -> Result<DVector<f64>> {
            v.as_ref()
                .map(|v| DVector::from_column_slice(v))
                .ok_or_else(|| anyhow!("conditioning.{name} is required for kind {:?}", c.kind))
        };
        let cond = match c.kind {
            ConditioningKind::FixedLeft => Conditioning::FixedLeft {
                x_minus: vector(&c.x_minus, "x_minus")?,
            },
            ConditioningKind::GaussianLeft => {
                let sigma = c
                    .sigma
                    .as_ref()
                    .ok_or_else(|| anyhow!("conditioning.sigma is required for kind gaussian_left"))?;
                Conditioning::GaussianLeft {
                    x_minus: vector(&c.x_minus, "x_minus")?,
                    sigma: matrix(sigma, "conditioning.sigma")?,
                }
            }
            ConditioningKind::Bridge => Conditioning::Bridge {
                x_minus: vector(&c.x_minus, "x_minus")?,
                x_plus: vector(&c.x_plus, "x_plus")?,
            },
            ConditioningKind::Observation => {
                let path = y_override
                    .map(FsPath::to_path_buf)
                    .or_else(|| c.y_file.clone())
                    .ok_or_else(|| anyhow!("conditioning.y_file is required for kind observation"))?;
                Conditioning::Observation {
                    obs: self.observation()?,
                    y_path: read_y(&path, grid)?,
                }
            }
        };
        let dim = match c.kind {
            ConditioningKind::Observation => cond.dim(),
            _ => self.model()?.dim(),
        };
        cond.validate(dim).context("conditioning")?;
        Ok(cond)
    }
}

/// Reads the `y_*` columns of a path file and checks its grid.
pub fn read_y(path: &FsPath, grid: Grid) -> Result<Path<f64>> {
    let file = fs::File::open(path).with_context(|| format!("opening observation file {}", path.display()))?;
    let table = read_path_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if table.grid != grid {
        return Err(pathspde::Error::GridMismatch(format!(
            "{} has {} nodes, config has n_nodes = {}",
            path.display(),
            table.grid.n_nodes(),
            grid.n_nodes()
        ))
        .into());
    }
    table
        .y
        .ok_or_else(|| anyhow!("{} has no y_* columns", path.display()))
}

pub fn matrix(rows: &Matrix, name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        bail!("{name}: matrix has no rows");
    }
    let m = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        bail!("{name}: row {i} has {} entries, row 0 has {m}", r.len());
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        bail!("{name}: entries must be finite");
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}
