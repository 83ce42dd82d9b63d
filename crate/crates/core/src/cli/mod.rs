//! Config-driven command runner behind the `holosim` binary.
//!
//! Each command computes its results in memory, then hands a list of
//! [`Artifact`]s to [`write_outputs`], which names files by command and
//! config hash.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::cgh::{
    self, apply_linear_grating, build_plane_targets, complex_to_double_phase,
    double_phase_assemble, masked_psnr, optimize_multiplane_phase, reconstruct_stack, wrap_phase,
    PhaseHologram, PlaneTargetStack,
};
use crate::error::{ConfigError, Error};
use crate::hbgf::{self, Grid};
use crate::kogelnik::efficiency_map;
use crate::raytrace::render_retinal_image;
use crate::sweep::{compare_axis_robustness, run_sweep};
use crate::wavefield::{propagate_padded, ComplexField};

pub use config::{load_config, parse_config, parse_config_str, ExperimentConfig};
pub use output::{fmt_f64, write_outputs, Artifact, Preview};

const MM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    EfficiencyMap,
    OptimizeHologram,
    Encode,
    Reconstruct,
    RenderRetina,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EfficiencyMap => "efficiency-map",
            Command::OptimizeHologram => "optimize-hologram",
            Command::Encode => "encode",
            Command::Reconstruct => "reconstruct",
            Command::RenderRetina => "render-retina",
            Command::Sweep => "sweep",
        }
    }
}

/// What a finished command reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub command: Command,
    /// Headline metric, human readable.
    pub metric: String,
    pub paths: Vec<PathBuf>,
}

impl RunSummary {
    pub fn line(&self) -> String {
        let paths: Vec<String> = self.paths.iter().map(|p| p.display().to_string()).collect();
        format!(
            "{}: {} -> {}",
            self.command.name(),
            self.metric,
            paths.join(", ")
        )
    }
}

/// Runs `command` and writes its artifacts under `config.output.directory`.
pub fn run(command: Command, config: &ExperimentConfig) -> Result<RunSummary, Error> {
    let (metric, artifacts) = execute(command, config)?;
    let hash = config.content_hash();
    let stem = format!("{}-{}", command.name(), &hash[..12]);
    let paths = write_outputs(
        &artifacts,
        &config.output.directory,
        &stem,
        config.output.png,
    )?;
    Ok(RunSummary {
        command,
        metric,
        paths,
    })
}

/// Computes a command's headline metric and artifacts without touching the
/// file system (beyond reading configured inputs).
pub fn execute(
    command: Command,
    config: &ExperimentConfig,
) -> Result<(String, Vec<Artifact>), Error> {
    match command {
        Command::EfficiencyMap => efficiency_map_cmd(config),
        Command::OptimizeHologram => optimize_cmd(config),
        Command::Encode => encode_cmd(config),
        Command::Reconstruct => reconstruct_cmd(config),
        Command::RenderRetina => render_cmd(config),
        Command::Sweep => sweep_cmd(config),
    }
}

fn efficiency_map_cmd(config: &ExperimentConfig) -> Result<(String, Vec<Artifact>), Error> {
    let k = &config.kogelnik;
    let map = if k.detuning_deg == 0.0 {
        efficiency_map(
            k.theta_min_deg,
            k.theta_max_deg,
            k.theta_step_deg,
            config.material(),
        )?
    } else {
        crate::kogelnik::detuned_efficiency_map(
            k.theta_min_deg,
            k.theta_max_deg,
            k.theta_step_deg,
            k.detuning_deg,
            config.material(),
        )?
    };
    let rows = map
        .eta
        .indexed_iter()
        .map(|((i, j), &v)| {
            vec![
                fmt_f64(map.angles_deg[i]),
                fmt_f64(map.angles_deg[j]),
                fmt_f64(v),
            ]
        })
        .collect();
    let (best, tr, ts) = map.argmax();
    let metric = format!(
        "eta[0,0] = {:.6}, max {best:.6} at ({tr}°, {ts}°)",
        map.eta[(0, 0)]
    );
    Ok((
        metric,
        vec![
            Artifact::table("eta", &["theta_r_deg", "theta_s_deg", "eta"], rows),
            Artifact::grid("eta", Grid::Real(map.eta.clone())),
            Artifact::png("eta", Preview::Intensity(map.eta)),
        ],
    ))
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case("png"))
        .unwrap_or(false)
}

/// PNG luma scaled to [0, 1], or a real HBGF grid.
pub fn load_real_grid(path: &Path) -> Result<Array2<f64>, Error> {
    if is_png(path) {
        let img = image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
            img.get_pixel(c as u32, r as u32).0[0] as f64 / 255.0
        }))
    } else {
        hbgf::read_file(path)
            .and_then(Grid::into_real)
            .map_err(|source| Error::Hbgf {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Target image and depth map: configured files, or the procedural scene.
fn scene_inputs(config: &ExperimentConfig) -> Result<(Array2<f64>, Array2<f64>), Error> {
    let c = &config.cgh;
    let (synthetic_image, synthetic_depth) = cgh::synthetic_scene(c.rows, c.cols, config.seed);
    let image = match &c.image_path {
        Some(p) => load_real_grid(p)?,
        None => synthetic_image,
    };
    let depth = match &c.depth_path {
        Some(p) => load_real_grid(p)?,
        None if image.dim() == synthetic_depth.dim() => synthetic_depth,
        None => {
            return Err(ConfigError::Invalid {
                key: "cgh.depth_path".into(),
                reason: format!(
                    "required when the image shape {:?} differs from cgh.rows x cgh.cols",
                    image.dim()
                ),
            }
            .into())
        }
    };
    Ok((image, depth))
}

fn plane_stack(config: &ExperimentConfig) -> Result<PlaneTargetStack, Error> {
    let c = &config.cgh;
    let (image, depth) = scene_inputs(config)?;
    Ok(build_plane_targets(
        &image,
        &depth,
        c.n_planes,
        c.base_distance_mm * MM,
        c.plane_separation_mm * MM,
    )?)
}

fn pitch(config: &ExperimentConfig) -> f64 {
    config.cgh.pitch_um / 1e6
}

fn cgh_wavelength(config: &ExperimentConfig) -> f64 {
    config.cgh.wavelength_nm / 1e9
}

fn optimize_cmd(config: &ExperimentConfig) -> Result<(String, Vec<Artifact>), Error> {
    let stack = plane_stack(config)?;
    let result = optimize_multiplane_phase(
        &stack,
        &config.optimizer(),
        pitch(config),
        cgh_wavelength(config),
    )?;
    let hologram = if config.cgh.linear_grating {
        apply_linear_grating(&result.hologram)
    } else {
        result.hologram.clone()
    };
    let recon = reconstruct_stack(&result.hologram, stack.distances())?;
    let psnr = masked_psnr(&recon, &stack);
    let metric = format!(
        "loss {:.6e} -> {:.6e} ({:.4}x), masked PSNR {psnr:.2} dB",
        result.initial_loss,
        result.final_loss,
        result.final_loss / result.initial_loss
    );
    let trace = result
        .trace
        .iter()
        .map(|&(i, l)| vec![i.to_string(), fmt_f64(l)])
        .collect();
    let mut artifacts = vec![
        Artifact::grid("phase", Grid::Real(hologram.phase().clone())),
        Artifact::table("loss", &["iteration", "loss"], trace),
        Artifact::png("phase", Preview::Phase(hologram.phase().clone())),
    ];
    for (p, r) in recon.into_iter().enumerate() {
        artifacts.push(Artifact::png(&format!("recon{p}"), Preview::Intensity(r)));
    }
    Ok((metric, artifacts))
}

fn encode_cmd(config: &ExperimentConfig) -> Result<(String, Vec<Artifact>), Error> {
    let (pitch, wavelength) = (pitch(config), cgh_wavelength(config));
    let distance = config.cgh.base_distance_mm * MM;
    let field = match &config.cgh.field_path {
        Some(p) => {
            let data = hbgf::read_file(p)
                .and_then(Grid::into_complex)
                .map_err(|source| Error::Hbgf {
                    path: p.clone(),
                    source,
                })?;
            ComplexField::new(data, pitch, wavelength)?
        }
        None => {
            let image = match &config.cgh.image_path {
                Some(p) => load_real_grid(p)?,
                None => cgh::synthetic_scene(config.cgh.rows, config.cgh.cols, config.seed).0,
            };
            let target = ComplexField::new(
                image.mapv(|v| num_complex::Complex64::new(v.max(0.0).sqrt(), 0.0)),
                pitch,
                wavelength,
            )?;
            propagate_padded(&target, -distance)?
        }
    };
    let a_max = field.data().iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if !(a_max > 0.0) {
        return Err(ConfigError::Invalid {
            key: "cgh.field_path".into(),
            reason: "field is identically zero".into(),
        }
        .into());
    }
    let (chan_a, chan_b) = complex_to_double_phase(&field, a_max)?;
    let mut hologram = double_phase_assemble(&chan_a, &chan_b, pitch, wavelength)?;
    if config.cgh.linear_grating {
        hologram = apply_linear_grating(&hologram);
    }
    let recon = reconstruct_stack(&hologram, &[distance])?.remove(0);
    let metric = format!(
        "{}x{} field, a_max {a_max:.4e}, linear grating {}",
        field.rows(),
        field.cols(),
        config.cgh.linear_grating
    );
    Ok((
        metric,
        vec![
            Artifact::grid("phase", Grid::Real(hologram.phase().clone())),
            Artifact::grid("recon", Grid::Real(recon.clone())),
            Artifact::png("phase", Preview::Phase(hologram.phase().clone())),
            Artifact::png("recon", Preview::Intensity(recon)),
        ],
    ))
}

fn reconstruct_cmd(config: &ExperimentConfig) -> Result<(String, Vec<Artifact>), Error> {
    let c = &config.cgh;
    let path = c
        .hologram_path
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid {
            key: "cgh.hologram_path".into(),
            reason: "required for reconstruct".into(),
        })?;
    let mut phase = load_real_grid(path)?;
    if is_png(path) {
        // Undo the phase preview mapping: gray 0..1 spans [-π, π).
        phase.mapv_inplace(|v| wrap_phase(v * 2.0 * std::f64::consts::PI - std::f64::consts::PI));
    }
    let hologram = PhaseHologram::new(phase, pitch(config), cgh_wavelength(config))?;
    let distances: Vec<f64> = (0..c.n_planes)
        .map(|p| (c.base_distance_mm + p as f64 * c.plane_separation_mm) * MM)
        .collect();
    let recon = reconstruct_stack(&hologram, &distances)?;
    let mut metric = format!("{} planes", recon.len());
    // Score against the configured targets when they describe this hologram.
    if let Ok(stack) = plane_stack(config) {
        if stack.shape() == hologram.shape() {
            metric = format!(
                "{metric}, masked PSNR {:.2} dB",
                masked_psnr(&recon, &stack)
            );
        }
    }
    let mut artifacts = Vec::new();
    for (p, r) in recon.into_iter().enumerate() {
        artifacts.push(Artifact::grid(&format!("plane{p}"), Grid::Real(r.clone())));
        artifacts.push(Artifact::png(&format!("plane{p}"), Preview::Intensity(r)));
    }
    Ok((metric, artifacts))
}

fn render_cmd(config: &ExperimentConfig) -> Result<(String, Vec<Artifact>), Error> {
    let scene = config.scene();
    let image = render_retinal_image(&scene, config.optics.rays_per_point, config.seed)?;
    let d = &image.diagnostics;
    let metric = format!(
        "total intensity {:.6}, {} of {} rays hit the retina",
        image.total_intensity(),
        d.hits,
        d.emitted
    );
    let rows = d
        .rows()
        .into_iter()
        .map(|(stage, count, weight)| vec![stage.to_string(), count.to_string(), fmt_f64(weight)])
        .collect();
    Ok((
        metric,
        vec![
            Artifact::grid("retina", Grid::Real(image.intensity.clone())),
            Artifact::grid("hits", Grid::Real(image.hit_count.mapv(f64::from))),
            Artifact::table("diagnostics", &["stage", "count", "discarded_weight"], rows),
            Artifact::png("retina", Preview::Intensity(image.intensity)),
        ],
    ))
}

fn sweep_cmd(config: &ExperimentConfig) -> Result<(String, Vec<Artifact>), Error> {
    let scene = config.scene();
    let sweep_config = config.sweep_config()?;
    let result = run_sweep(&scene, &sweep_config)?;
    let spread = compare_axis_robustness(&result);
    let (la, lb) = result.axis.labels();
    let n = result.values_a.len();
    let metric = format!(
        "{} {n}x{n}: spread along {la} {:.4}, along {lb} {:.4}",
        result.axis, spread.along_a, spread.along_b
    );
    let rows = result
        .rows()
        .into_iter()
        .map(|(a, b, v)| vec![fmt_f64(a), fmt_f64(b), fmt_f64(v)])
        .collect();
    Ok((
        metric,
        vec![
            Artifact::table(
                "brightness",
                &["param_a", "param_b", "relative_brightness"],
                rows,
            ),
            Artifact::grid("brightness", Grid::Real(result.brightness.clone())),
            Artifact::grid("hit_labels", Grid::Real(result.hit_labels.mapv(f64::from))),
            Artifact::grid(
                "accumulation",
                Grid::Real(result.intensity_accumulation.clone()),
            ),
            Artifact::png("brightness", Preview::Intensity(result.brightness.clone())),
            Artifact::png("hits", Preview::Rgb(result.hit_accumulation_rgb())),
            Artifact::png(
                "accumulation",
                Preview::Intensity(result.intensity_accumulation),
            ),
        ],
    ))
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(
    name = "holosim",
    version,
    about = "Holographic display simulation experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.directory).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Top-level seed (overrides seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Config override, e.g. `--set optics.pupil_diameter_mm=4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Bragg-matched efficiency over recording angle pairs.
    EfficiencyMap {
        /// Replay angle offset from Bragg match (overrides kogelnik.detuning_deg).
        #[arg(long)]
        detuning_deg: Option<f64>,
    },
    /// Multiplane phase-only hologram by gradient descent.
    OptimizeHologram {
        #[arg(long)]
        iterations: Option<usize>,
        /// Phase step per iteration, radians per unit gradient.
        #[arg(long)]
        step_size: Option<f64>,
    },
    /// Double-phase encoding of a complex field.
    Encode {
        /// Add the row-alternating π grating that steers light off the zero order.
        #[arg(long)]
        linear_grating: bool,
    },
    /// Propagate a phase hologram to every target plane.
    Reconstruct {
        /// Phase hologram: HBGF radians, or a PNG phase preview. Overrides cgh.hologram_path.
        #[arg(long)]
        hologram: Option<PathBuf>,
    },
    /// Ray trace the default layout onto the retina.
    RenderRetina {
        /// Rays traced per lit source point.
        #[arg(long)]
        rays_per_point: Option<usize>,
    },
    /// Misalignment sweep.
    Sweep {
        /// eyebox_xy, eyebox_xz, head_pan_tilt, head_translation_xy or
        /// head_translation_xz (`eyebox`, `orientation`, `head_translation`
        /// are accepted aliases).
        #[arg(long)]
        axis: Option<String>,
        /// Rays traced per lit source point.
        #[arg(long)]
        rays_per_point: Option<usize>,
    },
}

impl CliCommand {
    /// The command plus its flags rewritten as config overrides.
    fn resolve(&self) -> (Command, Vec<String>) {
        let mut o = Vec::new();
        let cmd = match self {
            CliCommand::EfficiencyMap { detuning_deg } => {
                if let Some(v) = detuning_deg {
                    o.push(format!("kogelnik.detuning_deg={v}"));
                }
                Command::EfficiencyMap
            }
            CliCommand::OptimizeHologram {
                iterations,
                step_size,
            } => {
                if let Some(v) = iterations {
                    o.push(format!("cgh.iterations={v}"));
                }
                if let Some(v) = step_size {
                    o.push(format!("cgh.step_size={v}"));
                }
                Command::OptimizeHologram
            }
            CliCommand::Encode { linear_grating } => {
                if *linear_grating {
                    o.push("cgh.linear_grating=true".into());
                }
                Command::Encode
            }
            CliCommand::Reconstruct { hologram } => {
                if let Some(p) = hologram {
                    o.push(format!(
                        "cgh.hologram_path={}",
                        serde_json::Value::String(p.display().to_string())
                    ));
                }
                Command::Reconstruct
            }
            CliCommand::RenderRetina { rays_per_point } => {
                if let Some(v) = rays_per_point {
                    o.push(format!("optics.rays_per_point={v}"));
                }
                Command::RenderRetina
            }
            CliCommand::Sweep {
                axis,
                rays_per_point,
            } => {
                if let Some(a) = axis {
                    o.push(format!(
                        "sweep.axis={}",
                        serde_json::Value::String(a.clone())
                    ));
                }
                if let Some(v) = rays_per_point {
                    o.push(format!("optics.rays_per_point={v}"));
                }
                Command::Sweep
            }
        };
        (cmd, o)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_cli(&cli) {
        Ok(summary) => {
            println!("{}", summary.line());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_cli(cli: &Cli) -> Result<RunSummary, Error> {
    let (command, mut overrides) = cli.command.resolve();
    let c = &cli.common;
    if let Some(seed) = c.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(dir) = &c.output {
        overrides.push(format!(
            "output.directory={}",
            serde_json::Value::String(dir.display().to_string())
        ));
    }
    // Explicit --set flags win over the convenience flags.
    overrides.extend(c.overrides.iter().cloned());
    let config = load_config(c.config.as_deref(), &overrides)?;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(ConfigError::Invalid {
                key: "--threads".into(),
                reason: "must be >= 1".into(),
            }
            .into());
        }
        // Fails only if the global pool already exists; the run still works.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    run(command, &config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_command_is_usage_error() {
        assert_ne!(main_with_args(["holosim", "frobnicate"]), 0);
        assert_ne!(main_with_args(["holosim"]), 0);
    }

    #[test]
    fn flags_become_overrides() {
        let cli = Cli::try_parse_from([
            "holosim",
            "sweep",
            "--axis",
            "eyebox",
            "--rays-per-point",
            "3",
            "--seed",
            "5",
        ])
        .unwrap();
        let (cmd, o) = cli.command.resolve();
        assert_eq!(cmd, Command::Sweep);
        assert_eq!(o, vec!["sweep.axis=\"eyebox\"", "optics.rays_per_point=3"]);
        assert_eq!(cli.common.seed, Some(5));
    }

    #[test]
    fn default_efficiency_map_corner() {
        let mut config = ExperimentConfig::default();
        config.kogelnik.theta_max_deg = 2.0;
        let (metric, artifacts) = execute(Command::EfficiencyMap, &config).unwrap();
        assert!(metric.starts_with("eta[0,0] = "), "{metric}");
        match &artifacts[0] {
            Artifact::Table { rows, header, .. } => {
                assert_eq!(header, &["theta_r_deg", "theta_s_deg", "eta"]);
                assert_eq!(rows.len(), 25);
                assert_eq!(rows[0][0], "0.0");
                let eta: f64 = rows[0][2].parse().unwrap();
                assert!((eta - 0.518).abs() < 1e-3, "{eta}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reconstruct_requires_hologram() {
        let err = execute(Command::Reconstruct, &ExperimentConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("cgh.hologram_path"));
    }

    #[test]
    fn physics_errors_keep_their_exit_codes() {
        let mut config = ExperimentConfig::default();
        config.sweep.translation_step_mm = 0.3;
        let err = execute(Command::Sweep, &config).unwrap_err();
        assert_eq!(err.exit_code(), 14);
    }
}
