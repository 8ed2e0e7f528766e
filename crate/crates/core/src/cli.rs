//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_config, Scenario, TemplateSpec};
use crate::error::{Error, Result};
use crate::genpos::{build_general_position, default_anchors, normalize_to_template_origin, verify_general_position,
    GeneralPositionCertificate};
use crate::hybrid::{simulate, HybridTrajectory};
use crate::templates::certify_template;

#[derive(Debug, Parser)]
#[command(name = "obstemplate", version, about = "Observer-based output feedback with control templates")]
pub struct Cli {
    /// Seed for every pseudo-random choice; overrides `certify.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the closed loop and write the trajectory CSV.
    Simulate {
        config: PathBuf,
        /// CSV path; defaults to the config's `output`.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        substeps: Option<usize>,
        #[arg(long)]
        t_final: Option<f64>,
    },
    /// Estimate the template constant g(delta) on a sampling grid.
    Certify {
        config: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        lambda_bar: Option<f64>,
        #[arg(long)]
        mu_grid: Option<usize>,
        #[arg(long)]
        rot_grid: Option<usize>,
        #[arg(long)]
        substeps: Option<usize>,
        /// Write the certificate here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Build a minimal (d, p)-general-position point set.
    Genpos {
        /// Optional scenario supplying `p`, `d` and anchors.
        config: Option<PathBuf>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        anchors: Option<Vec<f64>>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the symbolic observability matrix and a full-rank minor.
    Obsmatrix {
        config: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct GenposReport {
    d: usize,
    p: usize,
    anchors: Vec<f64>,
    subsets: Vec<Vec<usize>>,
    points: Vec<Vec<f64>>,
    template_points: Vec<Vec<f64>>,
    certificate: GeneralPositionCertificate,
}

#[derive(Serialize)]
struct ObsmatrixReport {
    kalman_matrix: Vec<Vec<String>>,
    minor_rows: Vec<usize>,
    determinant: String,
    determinant_terms: Vec<(f64, Vec<u32>)>,
    degree: Option<u32>,
    degree_bound: u32,
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = seed {
        config.certify.seed = seed;
    }
    config.build()
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run_simulation(sc: &Scenario, substeps: usize, t_final: f64) -> Result<HybridTrajectory> {
    let c = &sc.config;
    simulate(&sc.system, &sc.family, &sc.law, c.theta, c.delta, &sc.init, t_final, substeps)
}

fn rows(points: &[nalgebra::DVector<f64>]) -> Vec<Vec<f64>> {
    points.iter().map(|v| v.iter().copied().collect()).collect()
}

/// `sup |lambda|` over the ball containing the simulated trajectory.
pub fn auto_lambda_bar(sc: &Scenario) -> Result<f64> {
    let traj = run_simulation(sc, sc.config.substeps, sc.config.t_final)?;
    Ok(match sc.law.sup_on_ball(traj.max_state_norm()) {
        Some(v) => v,
        None => traj
            .samples
            .iter()
            .map(|s| sc.law.eval(&s.state.xhat).norm())
            .fold(0.0, f64::max),
    })
}

/// Executes one subcommand, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Simulate {
            config,
            output,
            substeps,
            t_final,
        } => {
            let sc = load(config, cli.seed)?;
            let substeps = substeps.unwrap_or(sc.config.substeps);
            if substeps == 0 {
                return Err(Error::Argument("--substeps must be at least 1".into()));
            }
            let traj = run_simulation(&sc, substeps, t_final.unwrap_or(sc.config.t_final))?;
            let path = output.clone().unwrap_or_else(|| PathBuf::from(&sc.config.output));
            let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
            traj.write_csv(&mut file)?;
            file.flush()?;
            emit(out, None, &json(&traj.summary())?)
        }
        Command::Certify {
            config,
            delta,
            lambda_bar,
            mu_grid,
            rot_grid,
            substeps,
            output,
        } => {
            let sc = load(config, cli.seed)?;
            let mut opts = sc.certify_options();
            opts.mu_grid = mu_grid.unwrap_or(opts.mu_grid);
            opts.rot_grid = rot_grid.unwrap_or(opts.rot_grid);
            opts.substeps = substeps.unwrap_or(opts.substeps);
            let delta = delta.unwrap_or(sc.config.delta);
            let lambda_bar = match lambda_bar.or(sc.config.certify.lambda_bar) {
                Some(v) => v,
                None => auto_lambda_bar(&sc)?,
            };
            let cert = certify_template(&sc.system, &sc.family, delta, lambda_bar, opts)?;
            emit(out, output.as_deref(), &json(&cert)?)
        }
        Command::Genpos {
            config,
            d,
            p,
            anchors,
            output,
        } => {
            let (mut cd, mut cp, mut ca) = (None, None, None);
            if let Some(path) = config {
                let sc = load(path, cli.seed)?;
                cp = Some(sc.system.p());
                cd = Some(sc.system.degree_bound() as usize);
                if let TemplateSpec::Genpos { d, anchors } = &sc.config.template {
                    cd = d.or(cd);
                    ca = anchors.clone();
                }
            }
            let d = d.or(cd).ok_or_else(|| Error::Argument("--d is required without a config".into()))?;
            let p = p.or(cp).ok_or_else(|| Error::Argument("--p is required without a config".into()))?;
            let anchors = anchors.clone().or(ca).unwrap_or_else(|| default_anchors(d, p));
            let set = build_general_position(d, p, &anchors)?;
            let report = GenposReport {
                d,
                p,
                anchors: set.anchors.clone(),
                subsets: set.subsets.clone(),
                points: rows(&set.points),
                template_points: rows(&normalize_to_template_origin(&set.points)),
                certificate: verify_general_position(&set),
            };
            emit(out, output.as_deref(), &json(&report)?)
        }
        Command::Obsmatrix { config, output } => {
            let sc = load(config, cli.seed)?;
            let kalman = sc.system.kalman_matrix()?;
            let minor = sc.system.find_full_rank_minor()?;
            let report = ObsmatrixReport {
                kalman_matrix: (0..kalman.rows())
                    .map(|i| (0..kalman.cols()).map(|j| kalman.get(i, j).to_string()).collect())
                    .collect(),
                minor_rows: minor.rows.clone(),
                determinant: minor.det.to_string(),
                determinant_terms: minor.det.to_encoding(),
                degree: minor.degree.finite(),
                degree_bound: minor.degree_bound,
            };
            emit(out, output.as_deref(), &json(&report)?)
        }
    }
}
