//! JSON scenario files.
//!
//! Polynomials are lists of `[coefficient, [e_1, ..., e_p]]` terms; matrices
//! are row-major lists of rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{FeedbackLaw, LoopState};
use crate::linalg::is_spd;
use crate::poly::{MultiPoly, PolyMatrix};
use crate::system::StateAffineSystem;
use crate::templates::{CertifyOptions, TemplateFamily};

/// The configuration shipped with the crate.
pub const EXAMPLE_CONFIG: &str = include_str!("../configs/example.json");

pub type PolyEncoding = Vec<(f64, Vec<u32>)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<PolyEncoding>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<PolyEncoding>>,
    pub b: Vec<PolyEncoding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSpec {
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(default)]
    pub saturation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TemplateSpec {
    Siso {
        n_levels: usize,
    },
    Square,
    Genpos {
        /// Degree to place points for; defaults to the system's degree bound.
        #[serde(default)]
        d: Option<usize>,
        #[serde(default)]
        anchors: Option<Vec<f64>>,
    },
    Explicit {
        points: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec::Named("identity".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    #[serde(rename = "S0", default)]
    pub s0_gain: GainSpec,
    /// Initial timer; `null` means `delta`, so the first jump is at `t = 0`.
    #[serde(default)]
    pub s0: Option<f64>,
    #[serde(default)]
    pub mu0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    /// `null` means `sup |lambda|` over the ball holding the simulated run.
    #[serde(default)]
    pub lambda_bar: Option<f64>,
    #[serde(default = "default_mu_grid")]
    pub mu_grid: usize,
    #[serde(default = "default_rot_grid")]
    pub rot_grid: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

impl Default for CertifySpec {
    fn default() -> Self {
        CertifySpec {
            lambda_bar: None,
            mu_grid: default_mu_grid(),
            rot_grid: default_rot_grid(),
            seed: 0,
            substeps: default_substeps(),
        }
    }
}

fn default_mu_grid() -> usize {
    CertifyOptions::default().mu_grid
}

fn default_rot_grid() -> usize {
    CertifyOptions::default().rot_grid
}

fn default_substeps() -> usize {
    20
}

fn default_output() -> String {
    "trajectory.csv".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSpec,
    pub feedback: FeedbackSpec,
    pub theta: f64,
    pub delta: f64,
    pub t_final: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub template: TemplateSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default = "default_output")]
    pub output: String,
}

/// Runtime objects built from a validated config.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: StateAffineSystem,
    pub family: TemplateFamily,
    pub law: FeedbackLaw,
    pub init: LoopState,
}

impl Scenario {
    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            mu_grid: self.config.certify.mu_grid,
            rot_grid: self.config.certify.rot_grid,
            seed: self.config.certify.seed,
            substeps: self.config.certify.substeps,
        }
    }
}

/// Parses and validates a scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<document>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    config.build()?;
    Ok(config)
}

pub fn to_json(config: &ScenarioConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(config)?)
}

fn poly(field: &str, p: usize, enc: &PolyEncoding) -> Result<MultiPoly> {
    if let Some(bad) = enc.iter().find(|(_, e)| e.len() != p) {
        return Err(Error::config(
            field,
            format!("term has {} exponents, expected p = {p}", bad.1.len()),
        ));
    }
    MultiPoly::from_terms(p, enc.iter().cloned()).map_err(|e| Error::config(field, e.to_string()))
}

fn poly_matrix(field: &str, rows: usize, cols: usize, p: usize, spec: &[Vec<PolyEncoding>]) -> Result<PolyMatrix> {
    if spec.len() != rows || spec.iter().any(|r| r.len() != cols) {
        return Err(Error::config(field, format!("expected a {rows}x{cols} matrix")));
    }
    let mut entries = Vec::with_capacity(rows * cols);
    for (i, row) in spec.iter().enumerate() {
        for (j, enc) in row.iter().enumerate() {
            entries.push(poly(&format!("{field}[{i}][{j}]"), p, enc)?);
        }
    }
    PolyMatrix::new(rows, cols, entries).map_err(|e| Error::config(field, e.to_string()))
}

fn real_matrix(field: &str, rows: usize, cols: usize, spec: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if spec.len() != rows || spec.iter().any(|r| r.len() != cols) {
        return Err(Error::config(field, format!("expected a {rows}x{cols} matrix")));
    }
    if spec.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| spec[i][j]))
}

fn real_vector(field: &str, len: usize, spec: &[f64]) -> Result<DVector<f64>> {
    if spec.len() != len {
        return Err(Error::config(field, format!("expected {len} entries, got {}", spec.len())));
    }
    if spec.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(field, "entries must be finite"));
    }
    Ok(DVector::from_row_slice(spec))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::config(field, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn system(&self) -> Result<StateAffineSystem> {
        let s = &self.system;
        for (name, v) in [("system.n", s.n), ("system.m", s.m), ("system.p", s.p)] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        let a = poly_matrix("system.A", s.n, s.n, s.p, &s.a)?;
        let c = poly_matrix("system.C", s.m, s.n, s.p, &s.c)?;
        if s.b.len() != s.n {
            return Err(Error::config("system.b", format!("expected {} entries, got {}", s.n, s.b.len())));
        }
        let b = s
            .b
            .iter()
            .enumerate()
            .map(|(i, enc)| poly(&format!("system.b[{i}]"), s.p, enc))
            .collect::<Result<Vec<_>>>()?;
        StateAffineSystem::new(a, c, b)
    }

    /// Validates every field and builds the runtime objects.
    pub fn build(&self) -> Result<Scenario> {
        let system = self.system()?;
        let (n, p) = (system.n(), system.p());
        if system.kalman_rank_at(&vec![0.0; p])? < n {
            return Err(Error::NotObservableAtTarget(
                "the Kalman matrix of (system.A, system.C) is rank deficient at u = 0".into(),
            ));
        }

        positive("theta", self.theta)?;
        positive("delta", self.delta)?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("t_final", format!("must be finite and nonnegative, got {}", self.t_final)));
        }
        if self.substeps == 0 {
            return Err(Error::config("substeps", "must be at least 1"));
        }

        let k = real_matrix("feedback.K", p, n, &self.feedback.k)?;
        if let Some(rho) = self.feedback.saturation {
            positive("feedback.saturation", rho)?;
        }
        let law = FeedbackLaw::linear(k).with_saturation(self.feedback.saturation);

        let family = match &self.template {
            TemplateSpec::Siso { n_levels } => {
                if p != 1 {
                    return Err(Error::config("template.kind", format!("siso template needs p = 1, system has p = {p}")));
                }
                TemplateFamily::siso(*n_levels).map_err(|e| Error::config("template.n_levels", e.to_string()))?
            }
            TemplateSpec::Square => {
                if p != 2 {
                    return Err(Error::config("template.kind", format!("square template needs p = 2, system has p = {p}")));
                }
                TemplateFamily::square()
            }
            TemplateSpec::Genpos { d, anchors } => {
                let d = d.unwrap_or(system.degree_bound() as usize);
                TemplateFamily::genpos(d, p, anchors.as_deref())
                    .map_err(|e| Error::config("template.anchors", e.to_string()))?
            }
            TemplateSpec::Explicit { points } => {
                let pts = points
                    .iter()
                    .enumerate()
                    .map(|(i, r)| real_vector(&format!("template.points[{i}]"), p, r))
                    .collect::<Result<Vec<_>>>()?;
                TemplateFamily::explicit(pts).map_err(|e| Error::config("template.points", e.to_string()))?
            }
        };
        family.check_delta(self.delta).map_err(|e| Error::config("delta", e.to_string()))?;

        let init = &self.initial;
        let x0 = real_vector("initial.x0", n, &init.x0)?;
        let xhat0 = real_vector("initial.xhat0", n, &init.xhat0)?;
        let gain = match &init.s0_gain {
            GainSpec::Named(name) if name == "identity" => DMatrix::identity(n, n),
            GainSpec::Named(name) => {
                return Err(Error::config("initial.S0", format!("unknown gain `{name}`, expected \"identity\" or a matrix")))
            }
            GainSpec::Matrix(rows) => real_matrix("initial.S0", n, n, rows)?,
        };
        if !is_spd(&gain, 1e-10) {
            return Err(Error::config("initial.S0", "must be symmetric positive-definite"));
        }
        let timer = init.s0.unwrap_or(self.delta);
        if !(timer >= 0.0 && timer <= self.delta) {
            return Err(Error::config("initial.s0", format!("must lie in [0, delta], got {timer}")));
        }
        if !(init.mu0 >= 0.0 && init.mu0.is_finite()) {
            return Err(Error::config("initial.mu0", format!("must be finite and nonnegative, got {}", init.mu0)));
        }
        let mut state = LoopState::initial(x0, xhat0, gain, timer, p);
        state.mu = init.mu0;

        let c = &self.certify;
        if let Some(lb) = c.lambda_bar {
            if !(lb >= 0.0 && lb.is_finite()) {
                return Err(Error::config("certify.lambda_bar", format!("must be finite and nonnegative, got {lb}")));
            }
        }
        for (name, v) in [
            ("certify.mu_grid", c.mu_grid),
            ("certify.rot_grid", c.rot_grid),
            ("certify.substeps", c.substeps),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if self.output.is_empty() {
            return Err(Error::config("output", "must not be empty"));
        }

        Ok(Scenario {
            config: self.clone(),
            system,
            family,
            law,
            init: state,
        })
    }
}
