//! Command-line front end. The binary is a one-line wrapper around [`run`].
//!
//! A *triple* argument is a path stem: `scene` names `scene_i0.pfm`,
//! `scene_i45.pfm` and `scene_i90.pfm` (or the `.pgm` equivalents).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bm3d::DenoiseProfile;
use crate::dataset::{
    average_frames, load_triple, make_fixture, render_aop, render_dop, save_stem, write_plane, write_ppm, DatasetManifest,
    FixtureKind, PlaneFormat, TriplePaths,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_method, format_table, EvalParams, EvalReport};
use crate::noise::{add_noise, dop_bias_probe, estimate_sigma, NoiseSpec};
use crate::optimize::{self, presets, OptimizationRun};
use crate::pbm3d::Method;
use crate::polar::CameraImage;

/// Exit status for a search that ran out of budget before converging.
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "polar-bm3d", version, about = "Denoising and analysis of polarization camera images")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Default,
    Fast,
}

impl ProfileArg {
    fn profile(self) -> DenoiseProfile {
        match self {
            ProfileArg::Default => DenoiseProfile::default(),
            ProfileArg::Fast => DenoiseProfile::fast(),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algo {
    MonteCarlo,
    Pattern,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Denoise a triple or every entry of a manifest.
    Denoise {
        /// Manifest (`.toml`) or triple stem.
        #[arg(long = "in")]
        input: PathBuf,
        /// Noise level; falls back to the manifest's value, then to an estimate.
        #[arg(long, allow_hyphen_values = true)]
        sigma: Option<f64>,
        #[arg(long, default_value = "pbm3d")]
        method: Method,
        /// Preset name or matrix file.
        #[arg(long, default_value = "opt-global")]
        matrix: String,
        #[arg(long)]
        out: PathBuf,
        /// pfd (lossless 64-bit), pfm, pgm8 or pgm16.
        #[arg(long, default_value = "pfd")]
        format: PlaneFormat,
        /// Clip to [0, 1] when writing integer formats.
        #[arg(long)]
        clip: bool,
        #[arg(long, value_enum, default_value = "default")]
        profile: ProfileArg,
    },
    /// Add seeded Gaussian noise to a triple.
    AddNoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output stem.
        #[arg(long)]
        out: PathBuf,
        /// pfd (lossless 64-bit), pfm, pgm8 or pgm16.
        #[arg(long, default_value = "pfd")]
        format: PlaneFormat,
        #[arg(long)]
        clip: bool,
    },
    /// Denoise a triple and score it against ground truth.
    Evaluate {
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "pbm3d")]
        method: Method,
        #[arg(long, default_value = "opt-global")]
        matrix: String,
        /// Noise level; estimated from the noisy triple when omitted.
        #[arg(long, allow_hyphen_values = true)]
        sigma: Option<f64>,
        /// Appends one JSON record.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        profile: ProfileArg,
    },
    /// Score several methods at several noise levels over a manifest.
    Benchmark {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.026,0.1")]
        sigmas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "pbm3d,bm3d-stokes,bm3d")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON-lines output; the text table goes to stdout.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "opt-global")]
        matrix: String,
        #[arg(long, value_enum, default_value = "default")]
        profile: ProfileArg,
    },
    /// Search for a channel transform that minimizes denoising error.
    Optimize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        sigma: f64,
        #[arg(long, value_enum, default_value = "pattern")]
        algo: Algo,
        #[arg(long, default_value_t = 50)]
        budget: usize,
        #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Starting matrix for pattern search.
        #[arg(long, default_value = "opponent")]
        start: String,
        /// Centered crop side per image; 0 keeps full images.
        #[arg(long, default_value_t = 128)]
        crop: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "default")]
        profile: ProfileArg,
    },
    /// Mean measured DoP of an unpolarized pixel under noise.
    BiasProbe {
        #[arg(long, allow_hyphen_values = true)]
        intensity: f64,
        #[arg(long, allow_hyphen_values = true)]
        sigma: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Average aligned frames into one triple.
    Average {
        #[arg(long = "in", num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// pfd (lossless 64-bit), pfm, pgm8 or pgm16.
        #[arg(long, default_value = "pfd")]
        format: PlaneFormat,
    },
    /// Write DoP (grey, white at 0.5) and AoP (hue wheel) images.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dop: PathBuf,
        #[arg(long)]
        out_aop: PathBuf,
    },
    /// Write a synthetic triple.
    Fixture {
        #[arg(long, default_value = "textured")]
        kind: FixtureKind,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// pfd (lossless 64-bit), pfm, pgm8 or pgm16.
        #[arg(long, default_value = "pfd")]
        format: PlaneFormat,
    },
    /// Print the preset matrices and their row-norm checks.
    Presets,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(Error::Internal(e.to_string())),
        },
        None => execute(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn is_manifest(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "toml")
}

fn load_stem(stem: &Path) -> Result<CameraImage> {
    load_triple(&TriplePaths::resolve(stem)?)
}

fn stem_id(stem: &Path) -> String {
    stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

fn sigma_or_estimate(sigma: Option<f64>, img: &CameraImage) -> Result<f64> {
    match sigma {
        Some(s) => Ok(s),
        None => {
            let s = estimate_sigma(img)?;
            println!("estimated sigma {s:.5}");
            Ok(s)
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Denoise {
            input,
            sigma,
            method,
            matrix,
            out,
            format,
            clip,
            profile,
        } => {
            let transform = optimize::resolve_transform(&matrix)?;
            let jobs: Vec<(String, CameraImage, Option<f64>)> = if is_manifest(&input) {
                let m = DatasetManifest::load(&input)?;
                m.entries.iter().map(|e| Ok((e.id.clone(), e.load()?, e.sigma))).collect::<Result<_>>()?
            } else {
                vec![(stem_id(&input), load_stem(&input)?, None)]
            };
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let profile = profile.profile();
            for (id, img, known) in jobs {
                let s = sigma_or_estimate(sigma.or(known), &img)?;
                let den = method.run(&img, s, &transform, &profile)?;
                let paths = save_stem(&den, &out.join(&id), format, clip)?;
                println!("{id}: {} sigma {s} -> {}", method, paths.i0.display());
            }
            Ok(0)
        }
        Command::AddNoise {
            input,
            sigma,
            seed,
            out,
            format,
            clip,
        } => {
            let noisy = add_noise(&load_stem(&input)?, NoiseSpec::new(sigma, seed)?)?;
            save_stem(&noisy, &out, format, clip)?;
            Ok(0)
        }
        Command::Evaluate {
            noisy,
            truth,
            method,
            matrix,
            sigma,
            report,
            profile,
        } => {
            let noisy_img = load_stem(&noisy)?;
            let truth_img = load_stem(&truth)?;
            let mut params = EvalParams::new(stem_id(&noisy), sigma_or_estimate(sigma, &noisy_img)?, optimize::resolve_transform(&matrix)?, matrix);
            params.profile = profile.profile();
            let r = evaluate_method(&noisy_img, &truth_img, method, &params)?;
            print!("{}", format_table(std::slice::from_ref(&r)));
            if let Some(path) = report {
                append_lines(&path, std::slice::from_ref(&r))?;
            }
            Ok(0)
        }
        Command::Benchmark {
            manifest,
            sigmas,
            methods,
            seed,
            report,
            matrix,
            profile,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let transform = optimize::resolve_transform(&matrix)?;
            let profile = profile.profile();
            let mut reports = Vec::new();
            for (i, e) in m.entries.iter().enumerate() {
                let truth = match e.load_truth()? {
                    Some(t) => t,
                    None => e.load()?,
                };
                for &sigma in &sigmas {
                    let noise_seed = optimize::image_seed(seed, i);
                    let noisy = add_noise(&truth, NoiseSpec::new(sigma, noise_seed)?)?;
                    for &method in &methods {
                        let mut params = EvalParams::new(e.id.clone(), sigma, transform.clone(), matrix.clone());
                        params.seed = noise_seed;
                        params.profile = profile.clone();
                        reports.push(evaluate_method(&noisy, &truth, method, &params)?);
                    }
                }
            }
            fs::write(&report, "").map_err(|e| Error::io(&report, e))?;
            append_lines(&report, &reports)?;
            print!("{}", format_table(&reports));
            Ok(0)
        }
        Command::Optimize {
            manifest,
            sigma,
            algo,
            budget,
            delta,
            seed,
            start,
            crop,
            out,
            profile,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let dataset = m
                .entries
                .iter()
                .map(|e| e.load_truth()?.map_or_else(|| e.load(), Ok))
                .collect::<Result<Vec<_>>>()?;
            let mut run = OptimizationRun::new(dataset, sigma, seed);
            run.budget = budget;
            run.delta = delta;
            run.crop = (crop > 0).then_some(crop);
            run.profile = profile.profile();
            let result = match algo {
                Algo::Pattern => optimize::pattern_search(&run, &optimize::resolve_transform(&start)?)?,
                Algo::MonteCarlo => optimize::monte_carlo_search(&run)?,
            };
            let o = &result.outcome;
            optimize::write_matrix(&out, o.transform.matrix())?;
            print!("{}", optimize::format_matrix(o.transform.matrix()));
            println!(
                "objective {:.6e} after {} iterations, {} evaluations",
                result.value.mean_mse, o.iterations, o.evaluations
            );
            if o.converged {
                Ok(0)
            } else {
                eprintln!("warning: budget exhausted before convergence");
                Ok(EXIT_NOT_CONVERGED)
            }
        }
        Command::BiasProbe {
            intensity,
            sigma,
            samples,
            seed,
        } => {
            println!("{:.6}", dop_bias_probe(intensity, sigma, samples, seed)?);
            Ok(0)
        }
        Command::Average { input, out, format } => {
            let frames = input.iter().map(|p| load_stem(p)).collect::<Result<Vec<_>>>()?;
            save_stem(&average_frames(&frames)?, &out, format, false)?;
            Ok(0)
        }
        Command::Render { input, out_dop, out_aop } => {
            let img = load_stem(&input)?;
            write_plane(&out_dop, &render_dop(&img), PlaneFormat::Pgm8, false)?;
            write_ppm(&out_aop, img.width(), img.height(), &render_aop(&img))?;
            Ok(0)
        }
        Command::Fixture {
            kind,
            size,
            seed,
            out,
            format,
        } => {
            save_stem(&make_fixture(kind, size, seed)?, &out, format, false)?;
            Ok(0)
        }
        Command::Presets => {
            for name in presets::names() {
                println!("{name}");
                let m = presets::preset_verbatim(&name)?;
                for check in presets::validate_preset(&name)? {
                    let r = m[check.row];
                    println!("  {:>9} {:>9} {:>9}   L1 {:.4} {:?}", r[0], r[1], r[2], check.l1, check.status);
                }
            }
            Ok(0)
        }
    }
}

fn append_lines(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    for r in reports {
        writeln!(f, "{}", r.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
