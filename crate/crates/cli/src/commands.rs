use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use pathspde::dynamics::{mh_adjust, run_chain, theta_stationary_covariance, GaussianTarget, KlBasis, PrecondSampler, SamplerConfig, ThetaSampler};
use pathspde::io::{write_columns, write_path_csv};
use pathspde::kalman::{filter_forward, riccati_forward, smooth_backward};
use pathspde::kernels::{kernel_bridge, kernel_fixed_left, kernel_gaussian_left};
use pathspde::model::{simulate_joint_sde, simulate_sde};
use pathspde::operator::{assemble_kalman_operator, assemble_operator, solve_mean_bvp};
use pathspde::{ChainState, Conditioning, GaussKernel, Grid, LinearSdeModel, Path};
use serde_json::json;

use crate::config::{read_y, ConditioningKind, Method, RunConfig};

pub fn load(path: &Option<PathBuf>, seed: Option<u64>) -> Result<RunConfig> {
    let path = path.as_ref().ok_or_else(|| anyhow!("--config is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn create(out: &FsPath, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn simulate(cfg: &RunConfig, out: &FsPath) -> Result<()> {
    let grid = cfg.grid()?;
    let joint = cfg.kind() == Some(ConditioningKind::Observation) || cfg.model.is_none();
    let mut w = create(out, "path.csv")?;
    if joint {
        let obs = cfg.observation()?;
        let (x, y) = simulate_joint_sde(&obs, grid, cfg.seed)?;
        write_path_csv(&mut w, &x, Some(&y))?;
    } else {
        let model = cfg.model_unchecked()?;
        let x0 = cfg
            .simulate
            .as_ref()
            .and_then(|s| s.x0.clone())
            .or_else(|| cfg.conditioning.as_ref().and_then(|c| c.x_minus.clone()))
            .ok_or_else(|| anyhow!("simulate.x0 is required when there is no conditioning.x_minus"))?;
        let x = simulate_sde(&model, &DVector::from_vec(x0), grid, cfg.seed).context("simulate.x0")?;
        write_path_csv(&mut w, &x, None)?;
    }
    w.flush()?;
    Ok(())
}

fn kernel_for(model: &LinearSdeModel<f64>, cond: &Conditioning<f64>) -> Result<Option<GaussKernel<f64>>> {
    Ok(match cond {
        Conditioning::FixedLeft { x_minus } => Some(kernel_fixed_left(model, x_minus)?),
        Conditioning::GaussianLeft { x_minus, sigma } => Some(kernel_gaussian_left(model, x_minus, sigma)?),
        Conditioning::Bridge { x_minus, x_plus } => Some(kernel_bridge(model, x_minus, x_plus)?),
        Conditioning::Observation { .. } => None,
    })
}

/// Standard error of a sample variance from `n` draws of an AR(1)-like
/// sequence with lag-1 autocorrelation `rho`.
fn variance_stderr(var: f64, rho: f64, n: usize) -> f64 {
    if n < 2 || var <= 0.0 {
        return 0.0;
    }
    let r = if rho.is_finite() { rho.clamp(-0.99, 0.99) } else { 0.0 };
    let r2 = r * r;
    var * (2.0 / (n as f64 - 1.0) * (1.0 + r2) / (1.0 - r2)).sqrt()
}

pub fn sample(cfg: &RunConfig, out: &FsPath) -> Result<()> {
    let grid = cfg.grid()?;
    let sc = cfg.sampler.as_ref().ok_or_else(|| anyhow!("missing [sampler] section"))?;
    let cond = cfg.conditioning(grid, None)?;
    let model = match &cond {
        Conditioning::Observation { obs, .. } => obs.signal_model(),
        _ => cfg.model()?,
    };
    let op = assemble_operator(&model, &cond, grid)?;
    let mean = solve_mean_bvp(&op, &cond)?;

    let dt = match sc.method {
        Method::Kl => sc.dt.unwrap_or(1.0),
        _ => sc.dt.ok_or_else(|| anyhow!("sampler.dt is required for method {}", sc.method.name()))?,
    };
    let burn_in = match (sc.burn_in, sc.method) {
        (Some(b), _) => b,
        (None, Method::Kl) => 0,
        (None, Method::Precond) => SamplerConfig::default_burn_in(dt, 1.0),
        (None, Method::Theta) => {
            let mu_min = op.spectrum().first().copied().unwrap_or(1.0);
            SamplerConfig::default_burn_in(dt, mu_min)
        }
    };
    let scfg = SamplerConfig::new(sc.theta, dt, sc.n_steps, burn_in, cfg.seed, sc.thin).context("sampler")?;

    // The unadjusted theta chain leaves a dt-dependent law invariant.
    let (target_mean, target_cov) = match (sc.method, kernel_for(&model, &cond)?) {
        (Method::Precond | Method::Kl, Some(k)) => (k.mean_path(grid), k.gram(grid)),
        (Method::Theta, _) if !sc.mh => (mean.clone(), theta_stationary_covariance(&op, &scfg)?),
        _ => (mean.clone(), op.covariance()?),
    };
    if scfg.n_recorded() == 0 {
        bail!(
            "sampler.n_steps = {} records nothing after burn_in = {burn_in} with thin = {}",
            scfg.n_steps,
            scfg.thin
        );
    }

    let mut samples = if sc.write_samples {
        let mut w = create(out, "samples.csv")?;
        let mut header = vec!["sample".to_string(), "u".to_string()];
        header.extend((1..=op.block_dim()).map(|k| format!("x_{k}")));
        writeln!(w, "{}", header.join(","))?;
        Some(w)
    } else {
        None
    };
    let mut write_err: Option<std::io::Error> = None;
    let mut n_emitted = 0usize;
    let mut emit = |p: &Path<f64>| {
        if let (Some(w), None) = (samples.as_mut(), write_err.as_ref()) {
            if let Err(e) = write_sample(w, n_emitted, p) {
                write_err = Some(e);
            }
        }
        n_emitted += 1;
    };

    let started = Instant::now();
    let mut state = ChainState::new(target_mean.clone(), cfg.seed);
    match sc.method {
        Method::Theta => {
            let sampler = ThetaSampler::new(&op, &mean, &scfg)?;
            if sc.mh {
                let target = GaussianTarget::new(&op, &mean)?;
                run_chain(&mut state, &scfg, |s| {
                    mh_adjust(&sampler, |x| target.log_density(x), s);
                    Ok(())
                }, &mut emit)?;
            } else {
                run_chain(&mut state, &scfg, |s| {
                    sampler.step(s);
                    Ok(())
                }, &mut emit)?;
            }
        }
        Method::Precond => {
            let sampler = PrecondSampler::new(&target_cov, &target_mean, &scfg)?;
            if sc.mh {
                let target = GaussianTarget::from_covariance(&target_cov, &target_mean)?;
                run_chain(&mut state, &scfg, |s| {
                    mh_adjust(&sampler, |x| target.log_density(x), s);
                    Ok(())
                }, &mut emit)?;
            } else {
                run_chain(&mut state, &scfg, |s| {
                    sampler.step(s);
                    Ok(())
                }, &mut emit)?;
            }
        }
        Method::Kl => {
            let basis = KlBasis::from_covariance(&target_cov, &target_mean)?;
            run_chain(&mut state, &scfg, |s| {
                s.current = basis.sample(&mut s.rng);
                Ok(())
            }, &mut emit)?;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(e) = write_err {
        return Err(e).context("writing samples.csv");
    }
    if let Some(mut w) = samples {
        w.flush()?;
    }

    write_stats(out, grid, op.block_dim(), &state, &target_mean, &target_cov)?;

    if sc.export_operator {
        let mut w = create(out, "operator.mtx")?;
        op.write_matrix_market(&mut w)?;
        w.flush()?;
    }

    let summary = json!({
        "command": "sample",
        "method": sc.method.name(),
        "conditioning": cond.tag(),
        "seed": cfg.seed,
        "n_nodes": grid.n_nodes(),
        "theta": scfg.theta,
        "dt": scfg.dt,
        "n_steps": scfg.n_steps,
        "burn_in": scfg.burn_in,
        "thin": scfg.thin,
        "n_recorded": state.stats.count(),
        "mh": sc.mh,
        "acceptance_rate": state.acceptance_rate(),
        "wall_clock_seconds": elapsed,
        "config": cfg,
    });
    let mut w = create(out, "summary.json")?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_sample<W: Write>(w: &mut W, index: usize, p: &Path<f64>) -> std::io::Result<()> {
    let grid = p.grid();
    for j in 0..grid.n_nodes() {
        write!(w, "{index},{}", pathspde::io::fmt_num(grid.node(j)))?;
        for v in p.at(j).iter() {
            write!(w, ",{}", pathspde::io::fmt_num(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_stats(
    out: &FsPath,
    grid: Grid,
    d: usize,
    state: &ChainState<f64>,
    target_mean: &Path<f64>,
    target_cov: &DMatrix<f64>,
) -> Result<()> {
    let n = state.stats.count();
    let (mean, var, lag) = if n > 0 {
        (state.stats.mean(), state.stats.variance(), state.stats.lag1())
    } else {
        let nan = DVector::from_element(grid.n_nodes() * d, f64::NAN);
        (nan.clone(), nan.clone(), nan)
    };
    let mut names = vec!["u".to_string()];
    let mut cols = vec![grid.nodes::<f64>()];
    let node_col = |f: &dyn Fn(usize) -> f64| (0..grid.n_nodes()).map(f).collect::<Vec<f64>>();
    for k in 0..d {
        let s = if d == 1 { String::new() } else { format!("_{}", k + 1) };
        let idx = |j: usize| j * d + k;
        names.extend(
            ["target_mean", "mean", "target_var", "var", "var_stderr", "lag1"]
                .iter()
                .map(|c| format!("{c}{s}")),
        );
        cols.push(node_col(&|j| target_mean.as_vector()[idx(j)]));
        cols.push(node_col(&|j| mean[idx(j)]));
        cols.push(node_col(&|j| target_cov[(idx(j), idx(j))]));
        cols.push(node_col(&|j| var[idx(j)]));
        cols.push(node_col(&|j| variance_stderr(var[idx(j)], lag[idx(j)], n)));
        cols.push(node_col(&|j| lag[idx(j)]));
    }
    let mut w = create(out, "stats.csv")?;
    write_columns(&mut w, &names, &cols)?;
    w.flush()?;
    Ok(())
}

pub fn smooth(cfg: &RunConfig, y_override: Option<&FsPath>, out: &FsPath) -> Result<()> {
    let grid = cfg.grid()?;
    let obs = cfg.observation()?;
    let y_file = y_override
        .map(FsPath::to_path_buf)
        .or_else(|| cfg.conditioning.as_ref().and_then(|c| c.y_file.clone()))
        .ok_or_else(|| anyhow!("an observation path is required: pass --y or set conditioning.y_file"))?;
    let y = read_y(&y_file, grid)?;
    if y.dim() != obs.dim_y() {
        return Err(pathspde::Error::DimensionMismatch {
            context: "observation path columns",
            expected: obs.dim_y(),
            got: y.dim(),
        }
        .into());
    }
    let s = riccati_forward(&obs, grid)?;
    let xhat = filter_forward(&obs, &s, &y)?;
    let sweep = smooth_backward(&obs, &s, &xhat, &y)?;
    let op = assemble_kalman_operator(&obs, grid)?;
    let cond = Conditioning::Observation {
        obs: obs.clone(),
        y_path: y,
    };
    let bvp = solve_mean_bvp(&op, &cond)?;

    let m = obs.dim_x();
    let mut names = vec!["u".to_string()];
    let mut cols = vec![grid.nodes::<f64>()];
    for k in 0..m {
        let s = if m == 1 { String::new() } else { format!("_{}", k + 1) };
        let a = sweep.component(k);
        let b = bvp.component(k);
        names.extend(["xhat", "xtilde_sweep", "xtilde_bvp", "diff"].iter().map(|c| format!("{c}{s}")));
        cols.push(xhat.component(k));
        cols.push(a.clone());
        cols.push(b.clone());
        cols.push(a.iter().zip(&b).map(|(p, q)| p - q).collect());
    }
    let mut w = create(out, "smooth.csv")?;
    write_columns(&mut w, &names, &cols)?;
    w.flush()?;
    Ok(())
}
