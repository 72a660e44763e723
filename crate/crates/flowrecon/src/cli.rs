//! Argument parsing and subcommand dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Choice, Config, Level, NoiseLevel};
use crate::error::{AppError, Result};
use crate::{io, stages, study};

#[derive(Debug, Parser)]
#[command(name = "flowrecon", version, about = "Flow domain, velocity and wall shear stress reconstruction")]
pub struct Cli {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the rayon pool.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Noise seed, overriding `seeds`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize magnitude, phase-contrast and velocity grids.
    Phantom {
        /// Voxel size; defaults to the first configured resolution.
        #[arg(long)]
        h: Option<f64>,
        /// Index into the configured noise levels.
        #[arg(long, default_value_t = 0)]
        noise: usize,
        #[arg(long)]
        sigma_mag: Option<f64>,
        #[arg(long)]
        sigma_complex: Option<f64>,
    },
    /// Normalize raw magnitude and retrieve velocity from complex data.
    Ingest {
        #[arg(long)]
        magnitude: PathBuf,
        #[arg(long)]
        complex: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Reconstruct the radius function from a magnitude grid.
    ReconGeometry {
        /// Normalized magnitude grid.
        #[arg(long, alias = "grid")]
        input: PathBuf,
        /// Magnitude noise level or `auto`.
        #[arg(long, default_value = "auto")]
        delta: Level,
        /// Positive value, `disc` or `auto`.
        #[arg(long)]
        alpha: Option<Choice>,
        /// Fourier truncation `N`.
        #[arg(long)]
        n_fourier: Option<usize>,
        /// Heaviside smoothing width or `auto` for `h/2`.
        #[arg(long)]
        gamma: Option<Level>,
        /// Result file; defaults to `geometry.json` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the velocity field on a reconstructed geometry.
    ReconVelocity {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        geometry: PathBuf,
        /// Positive value, `disc` or `auto`.
        #[arg(long)]
        beta: Option<Choice>,
        /// Data error bound or `auto`.
        #[arg(long)]
        delta_u: Option<Level>,
        /// Eigenvalue cutoff.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Result file; defaults to `vel.json` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wall shear stress from geometry and velocity results.
    Wss {
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        velocity: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        lowpass: Option<usize>,
        #[arg(long)]
        viscosity: Option<f64>,
        /// CSV file; defaults to `tau.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Geometry, velocity and wall shear stress in sequence.
    Pipeline {
        /// Directory holding `magnitude.json` and `u.json`; defaults to the output directory.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Full factorial convergence study.
    RateStudy,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    match &cli.command {
        Command::ReconGeometry {
            alpha, n_fourier, gamma, ..
        } => {
            if let Some(a) = alpha {
                cfg.geometry.alpha = *a;
            }
            if let Some(n) = n_fourier {
                cfg.geometry.n_fourier = *n;
            }
            match gamma {
                Some(Level::Value(g)) => cfg.geometry.gamma = Some(*g),
                Some(Level::Auto(_)) => cfg.geometry.gamma = None,
                None => {}
            }
        }
        Command::ReconVelocity { beta, delta_u, cutoff, .. } => {
            if let Some(b) = beta {
                cfg.velocity.beta = *b;
            }
            if let Some(d) = delta_u {
                cfg.velocity.delta_u = *d;
            }
            if cutoff.is_some() {
                cfg.velocity.cutoff = *cutoff;
            }
        }
        Command::Wss { samples, lowpass, viscosity, .. } => {
            if let Some(s) = samples {
                cfg.wss.samples = *s;
            }
            if let Some(k) = lowpass {
                cfg.wss.lowpass = *k;
            }
            if let Some(v) = viscosity {
                cfg.wss.viscosity = *v;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Phantom {
            h,
            noise,
            sigma_mag,
            sigma_complex,
        } => {
            let base = *cfg
                .noise_levels
                .get(noise)
                .ok_or_else(|| AppError::Config(format!("noise index {noise} out of range")))?;
            let level = NoiseLevel {
                sigma_mag: sigma_mag.unwrap_or(base.sigma_mag),
                sigma_complex: sigma_complex.unwrap_or(base.sigma_complex),
            };
            stages::cmd_phantom(&cfg, &out, h.unwrap_or(cfg.resolutions[0]), level, cfg.seeds[0])?;
        }
        Command::Ingest { magnitude, complex, bins } => stages::cmd_ingest(&magnitude, &complex, &out, bins)?,
        Command::ReconGeometry {
            input, delta, out: file, ..
        } => {
            let file = file.unwrap_or_else(|| out.join(stages::GEOMETRY_FILE));
            let r = stages::cmd_recon_geometry(&cfg, &input, delta, &file)?;
            println!("alpha {} residual {}", r.alpha, r.residual);
        }
        Command::ReconVelocity {
            grid, geometry, out: file, ..
        } => {
            let file = file.unwrap_or_else(|| out.join(stages::VELOCITY_FILE));
            let r = stages::cmd_recon_velocity(&cfg, &grid, &geometry, cfg.velocity.delta_u, &file)?;
            println!("beta {} residual {}", r.beta, r.residual);
        }
        Command::Wss {
            geometry, velocity, out: file, ..
        } => {
            let file = file.unwrap_or_else(|| out.join(stages::WSS_FILE));
            let (raw, filtered) = stages::cmd_wss(&cfg, &geometry, &velocity, &file)?;
            println!(
                "mean {} filtered {}",
                flowrecon_core::wss::mean_wss(&raw),
                flowrecon_core::wss::mean_wss(&filtered)
            );
        }
        Command::Pipeline { data } => {
            let s = stages::cmd_pipeline(&cfg, data.as_deref().unwrap_or(&out), &out)?;
            println!(
                "{}",
                serde_json::to_string(&s).map_err(|e| AppError::format(&out.join(stages::SUMMARY_FILE), e.to_string()))?
            );
        }
        Command::RateStudy => {
            let report = study::cmd_rate_study(&cfg, &out)?;
            for s in &report.slopes {
                let scope = s.h.map_or("pooled".to_string(), |h| format!("h={h}"));
                println!("{} vs {} ({scope}): slope {:.3}", s.quantity, s.driver, s.slope);
            }
            io::write_json(&out.join("config.json"), &cfg)?;
        }
    }
    Ok(())
}
