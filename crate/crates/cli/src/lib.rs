//! Command-line surface for training and inspecting holovox models.
//!
//! Every `TrainConfig` key is also a `train` flag, spelled with dashes
//! (`batch_size` becomes `--batch-size`). Boolean keys accept a bare flag
//! (`--no-rotation`) or an explicit value (`--no-rotation false`).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use holovox::data;
use holovox::generator::{Generator, RenderMode};
use holovox::geometry::{sweep_poses, Pose, SweepAxis};
use holovox::gradcheck::{self, SuiteOptions};
use holovox::tensor::Tensor;
use holovox::training::{load_checkpoint, sample_latent, KeyKind, Session, TrainConfig};

/// Keys that may change when resuming; the rest define the model and the
/// data stream and come from the checkpoint.
const RESUMABLE_KEYS: &[&str] = &["steps", "out", "checkpoint_interval", "sample_interval"];

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn train_command() -> Command {
    let mut cmd = Command::new("train")
        .about("Train a model, writing loss.csv, samples/ and ckpt/ under --out")
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help("Flat key = value config file; flags override it"),
        )
        .arg(
            Arg::new("resume")
                .long("resume")
                .value_name("CHECKPOINT")
                .help("Continue from a checkpoint; only steps, out and the intervals may change"),
        );
    for key in TrainConfig::KEYS {
        let mut arg = Arg::new(key.name)
            .long(flag_name(key.name))
            .help(key.help)
            .action(ArgAction::Set);
        arg = match key.kind {
            KeyKind::Flag => arg
                .value_name("BOOL")
                .num_args(0..=1)
                .default_missing_value("true"),
            KeyKind::Integer => arg.value_name("INT"),
            KeyKind::Real => arg.value_name("REAL").allow_negative_numbers(true),
            KeyKind::Text => arg.value_name("TEXT"),
        };
        cmd = cmd.arg(arg);
    }
    cmd
}

fn checkpoint_arg() -> Arg {
    Arg::new("checkpoint")
        .long("checkpoint")
        .value_name("PATH")
        .required(true)
        .help("Checkpoint written by train")
}

fn out_arg(default: &'static str) -> Arg {
    Arg::new("out")
        .long("out")
        .value_name("PNG")
        .default_value(default)
        .help("Output grid image")
}

fn u64_arg(name: &'static str, default: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("INT")
        .default_value(default)
        .value_parser(clap::value_parser!(u64))
        .help(help)
}

fn usize_arg(name: &'static str, default: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("INT")
        .default_value(default)
        .value_parser(clap::value_parser!(usize))
        .help(help)
}

pub fn command() -> Command {
    Command::new("holovox")
        .about("3D-aware image generation with learnt feature volumes")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(train_command())
        .subcommand(
            Command::new("sample")
                .about("Render a grid of random samples at one pose")
                .arg(checkpoint_arg())
                .arg(usize_arg("count", "8", "Number of samples"))
                .arg(u64_arg("seed", "0", "Latent seed"))
                .arg(
                    Arg::new("azimuth")
                        .long("azimuth")
                        .value_name("DEG")
                        .allow_negative_numbers(true)
                        .value_parser(clap::value_parser!(f64))
                        .help("Azimuth; defaults to the centre of the training range"),
                )
                .arg(
                    Arg::new("elevation")
                        .long("elevation")
                        .value_name("DEG")
                        .allow_negative_numbers(true)
                        .value_parser(clap::value_parser!(f64))
                        .help("Elevation; defaults to the centre of the training range"),
                )
                .arg(out_arg("sample.png")),
        )
        .subcommand(
            Command::new("sweep")
                .about("Vary one pose angle over the training range with the latent fixed")
                .arg(checkpoint_arg())
                .arg(
                    Arg::new("axis")
                        .long("axis")
                        .value_parser(["azimuth", "elevation"])
                        .default_value("azimuth")
                        .help("Angle to vary"),
                )
                .arg(usize_arg("steps", "8", "Number of poses"))
                .arg(u64_arg("seed", "0", "Latent seed"))
                .arg(out_arg("sweep.png")),
        )
        .subcommand(
            Command::new("interpolate")
                .about("Blend two latents linearly at a fixed pose")
                .arg(checkpoint_arg())
                .arg(u64_arg("seed-a", "0", "Seed of the first latent"))
                .arg(u64_arg("seed-b", "1", "Seed of the second latent"))
                .arg(usize_arg("steps", "8", "Number of blend weights, endpoints included"))
                .arg(out_arg("interpolate.png")),
        )
        .subcommand(
            Command::new("mix")
                .about("Combine 3D latents (rows) with 2D latents (columns)")
                .arg(checkpoint_arg())
                .arg(
                    Arg::new("seeds-3d")
                        .long("seeds-3d")
                        .value_name("SEEDS")
                        .value_delimiter(',')
                        .value_parser(clap::value_parser!(u64))
                        .required(true)
                        .help("Comma-separated seeds for z1"),
                )
                .arg(
                    Arg::new("seeds-2d")
                        .long("seeds-2d")
                        .value_name("SEEDS")
                        .value_delimiter(',')
                        .value_parser(clap::value_parser!(u64))
                        .required(true)
                        .help("Comma-separated seeds for z2"),
                )
                .arg(out_arg("mix.png")),
        )
        .subcommand(
            Command::new("gradcheck")
                .about("Compare every gradient against central differences in 64-bit")
                .arg(usize_arg("instances", "3", "Random instances per check"))
                .arg(u64_arg("seed", "0", "Seed for the random instances"))
                .arg(
                    Arg::new("inject-fault")
                        .long("inject-fault")
                        .value_name("CHECK")
                        .help("Corrupt the analytic gradient of one check, to test the failure path"),
                )
                .arg(
                    Arg::new("filter")
                        .long("filter")
                        .value_name("TEXT")
                        .help("Run only checks whose name contains TEXT"),
                )
                .arg(
                    Arg::new("list")
                        .long("list")
                        .action(ArgAction::SetTrue)
                        .help("Print the check names and exit"),
                ),
        )
}

/// The latent a seed names, shaped `[1, d]`.
pub fn seed_latent(seed: u64, d: usize) -> Tensor<f32> {
    let z = sample_latent::<f32, _>(&mut ChaCha8Rng::seed_from_u64(seed), d);
    z.reshaped(vec![1, d]).expect("latent shape")
}

/// `(1 - t)·a + t·b` for `k` evenly spaced `t` in `[0, 1]`.
pub fn interpolate_latents(a: &Tensor<f32>, b: &Tensor<f32>, k: usize) -> Vec<Tensor<f32>> {
    (0..k)
        .map(|i| {
            let t = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| ((1.0 - t) * x as f64 + t * y as f64) as f32)
                .collect();
            Tensor::new(a.shape().to_vec(), data).expect("latent shape")
        })
        .collect()
}

fn single(image: Tensor<f32>) -> Tensor<f32> {
    let s = image.shape()[1..].to_vec();
    image.reshaped(s).expect("image shape")
}

/// One image per pose along `axis`, all from the latent of `seed`.
pub fn sweep_images(g: &Generator<f32>, config: &TrainConfig, axis: SweepAxis, k: usize, seed: u64) -> Result<Vec<Tensor<f32>>> {
    if k == 0 {
        bail!("--steps must be at least 1");
    }
    let z = seed_latent(seed, config.latent_dim);
    let poses = sweep_poses(&config.pose_range(), axis, k);
    Ok(g.render_sweep(&z, &z, &poses)?.into_iter().map(single).collect())
}

pub fn interpolate_images(g: &Generator<f32>, config: &TrainConfig, seed_a: u64, seed_b: u64, k: usize) -> Result<Vec<Tensor<f32>>> {
    if k == 0 {
        bail!("--steps must be at least 1");
    }
    let pose = config.pose_range().midpoint();
    let (a, b) = (seed_latent(seed_a, config.latent_dim), seed_latent(seed_b, config.latent_dim));
    interpolate_latents(&a, &b, k)
        .iter()
        .map(|z| Ok(single(g.generate(z, z, &pose, RenderMode::Eval)?)))
        .collect()
}

/// Row-major grid: row `i` holds `z1` from `seeds_3d[i]`, column `j` holds
/// `z2` from `seeds_2d[j]`.
pub fn mix_images(g: &Generator<f32>, config: &TrainConfig, seeds_3d: &[u64], seeds_2d: &[u64]) -> Result<Vec<Tensor<f32>>> {
    if seeds_3d.is_empty() || seeds_2d.is_empty() {
        bail!("mix needs at least one seed of each kind");
    }
    let pose = config.pose_range().midpoint();
    let mut out = Vec::with_capacity(seeds_3d.len() * seeds_2d.len());
    for &s1 in seeds_3d {
        let z1 = seed_latent(s1, config.latent_dim);
        for &s2 in seeds_2d {
            let z2 = seed_latent(s2, config.latent_dim);
            out.push(single(g.generate(&z1, &z2, &pose, RenderMode::Eval)?));
        }
    }
    Ok(out)
}

/// Config from an optional file plus flag overrides, in that order.
pub fn resolve_config(matches: &ArgMatches) -> Result<TrainConfig> {
    let mut config = match matches.get_one::<String>("config") {
        Some(path) => TrainConfig::load(Path::new(path))?,
        None => TrainConfig::default(),
    };
    for (key, value) in overrides(matches) {
        config.set(key, &value)?;
    }
    Ok(config)
}

fn overrides(matches: &ArgMatches) -> Vec<(&'static str, String)> {
    TrainConfig::KEYS
        .iter()
        .filter_map(|k| matches.get_one::<String>(k.name).map(|v| (k.name, v.clone())))
        .collect()
}

fn cmd_train(matches: &ArgMatches) -> Result<()> {
    let mut session = match matches.get_one::<String>("resume") {
        Some(ckpt) => {
            let mut session = Session::resume(Path::new(ckpt))?;
            for (key, value) in overrides(matches) {
                if !RESUMABLE_KEYS.contains(&key) {
                    bail!("--{} cannot change when resuming", flag_name(key));
                }
                session.trainer.config.set(key, &value)?;
            }
            session
        }
        None => Session::new(resolve_config(matches)?)?,
    };
    let steps = session.trainer.config.steps;
    let every = (steps / 20).max(1);
    session.run(steps, |step, report| {
        if step % every == 0 || step == steps {
            log::info!(
                "step {step}: g_total {:.4} g_gan {:.4} g_identity {:.4} g_style {:.4} d_total {:.4}",
                report.g_total,
                report.g_gan,
                report.g_identity,
                report.g_style,
                report.d_total
            );
        }
    })?;
    println!(
        "trained to step {}; outputs in {}",
        session.trainer.step,
        session.out_dir().display()
    );
    Ok(())
}

fn load_generator(matches: &ArgMatches) -> Result<(Generator<f32>, TrainConfig)> {
    let path = matches.get_one::<String>("checkpoint").expect("required");
    let trainer = load_checkpoint(Path::new(path)).with_context(|| format!("loading {path}"))?;
    Ok((trainer.generator, trainer.config))
}

fn write_grid(images: &[Tensor<f32>], cols: usize, matches: &ArgMatches) -> Result<()> {
    let out = PathBuf::from(matches.get_one::<String>("out").expect("defaulted"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    data::write_grid(images, cols, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_sample(m: &ArgMatches) -> Result<()> {
    let (g, config) = load_generator(m)?;
    let count = *m.get_one::<usize>("count").expect("defaulted");
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let centre = config.pose_range().midpoint();
    let pose = Pose::new(
        m.get_one::<f64>("azimuth").copied().unwrap_or(centre.azimuth),
        m.get_one::<f64>("elevation").copied().unwrap_or(centre.elevation),
        1.0,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(*m.get_one::<u64>("seed").expect("defaulted"));
    let images = (0..count)
        .map(|_| {
            let z = sample_latent::<f32, _>(&mut rng, config.latent_dim).reshaped(vec![1, config.latent_dim])?;
            Ok(single(g.generate(&z, &z, &pose, RenderMode::Eval)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_grid(&images, count.min(8), m)
}

fn cmd_sweep(m: &ArgMatches) -> Result<()> {
    let (g, config) = load_generator(m)?;
    let axis = match m.get_one::<String>("axis").map(String::as_str) {
        Some("elevation") => SweepAxis::Elevation,
        _ => SweepAxis::Azimuth,
    };
    let k = *m.get_one::<usize>("steps").expect("defaulted");
    let images = sweep_images(&g, &config, axis, k, *m.get_one::<u64>("seed").expect("defaulted"))?;
    write_grid(&images, k, m)
}

fn cmd_interpolate(m: &ArgMatches) -> Result<()> {
    let (g, config) = load_generator(m)?;
    let k = *m.get_one::<usize>("steps").expect("defaulted");
    let a = *m.get_one::<u64>("seed-a").expect("defaulted");
    let b = *m.get_one::<u64>("seed-b").expect("defaulted");
    let images = interpolate_images(&g, &config, a, b, k)?;
    write_grid(&images, k, m)
}

fn cmd_mix(m: &ArgMatches) -> Result<()> {
    let (g, config) = load_generator(m)?;
    let seeds = |name: &str| m.get_many::<u64>(name).map(|v| v.copied().collect::<Vec<_>>()).unwrap_or_default();
    let (s3, s2) = (seeds("seeds-3d"), seeds("seeds-2d"));
    let images = mix_images(&g, &config, &s3, &s2)?;
    write_grid(&images, s2.len(), m)
}

/// Returns whether every check passed.
fn cmd_gradcheck(m: &ArgMatches) -> bool {
    if m.get_flag("list") {
        for name in gradcheck::check_names() {
            println!("{name}");
        }
        return true;
    }
    let options = SuiteOptions {
        instances: *m.get_one::<usize>("instances").expect("defaulted"),
        seed: *m.get_one::<u64>("seed").expect("defaulted"),
        inject_fault: m.get_one::<String>("inject-fault").cloned(),
        filter: m.get_one::<String>("filter").cloned(),
        ..SuiteOptions::default()
    };
    let report = gradcheck::run_suite(&options);
    println!("{report}");
    report.passed()
}

/// Runs one command; `Ok(false)` means it completed but reported failure.
pub fn run(matches: &ArgMatches) -> Result<bool> {
    match matches.subcommand() {
        Some(("train", m)) => cmd_train(m).map(|_| true),
        Some(("sample", m)) => cmd_sample(m).map(|_| true),
        Some(("sweep", m)) => cmd_sweep(m).map(|_| true),
        Some(("interpolate", m)) => cmd_interpolate(m).map(|_| true),
        Some(("mix", m)) => cmd_mix(m).map(|_| true),
        Some(("gradcheck", m)) => Ok(cmd_gradcheck(m)),
        _ => unreachable!("subcommand is required"),
    }
}
