use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use srclpm::harness::{
    emit_report, emit_sweep_report, make_dataset, noise_sweep_timed, run_experiment_timed,
    train_arm, Arm, ExperimentConfig, Pose, ReportFormat, Timings,
};
use srclpm::rng::derive_seed;
use srclpm::{load_pgm, save_pgm, BlockScorer, BlockShape, Error, LabeledDictionary, Result};

#[derive(Parser)]
#[command(
    name = "srclpm",
    version,
    about = "Block-based sparse representation classification for sonar imagery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset as PGM files plus train/test manifests.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Which trial's dataset to render.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build a dictionary from a manifest of training images.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "lpm_dl")]
        arm: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Classify one PGM image and print the decision as JSON.
    Classify {
        #[arg(long)]
        dictionary: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the full experiment and print a report.
    Bench {
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Repeat the experiment with salt-and-pepper noise on the test images.
    NoiseSweep {
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Config file plus one override flag per config field.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// HEIGHTxWIDTH
    #[arg(long)]
    image_size: Option<String>,
    #[arg(long)]
    num_train_images: Option<usize>,
    #[arg(long)]
    num_test_images: Option<usize>,
    #[arg(long)]
    blocks_per_train_image: Option<usize>,
    #[arg(long)]
    atoms_per_class: Option<usize>,
    #[arg(long)]
    test_blocks: Option<usize>,
    /// MxN (rows x columns)
    #[arg(long)]
    block_shape: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    solver_lambda: Option<f64>,
    #[arg(long)]
    solver_epsilon: Option<f64>,
    #[arg(long)]
    solver_max_iters: Option<usize>,
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    odl_lambda: Option<f64>,
    #[arg(long)]
    odl_epochs: Option<usize>,
    #[arg(long)]
    odl_batch_size: Option<usize>,
    /// ml or majority
    #[arg(long)]
    fusion: Option<String>,
    /// Comma-separated subset of lpm_dl,lpm_random,global_src
    #[arg(long)]
    arms: Option<String>,
    /// Comma-separated densities in [0, 1]
    #[arg(long)]
    noise_densities: Option<String>,
    #[arg(long)]
    clutter_level: Option<f64>,
    #[arg(long)]
    max_shift: Option<f64>,
    /// LO,HI
    #[arg(long)]
    scale_range: Option<String>,
    #[arg(long)]
    test_on_train: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_pair<T: std::str::FromStr>(name: &'static str, text: &str, sep: char) -> Result<(T, T)> {
    let bad = || Error::Parameter {
        name,
        reason: format!("cannot parse `{text}`"),
    };
    let (a, b) = text.split_once(sep).ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::param("config", format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::param("config", e.to_string()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.image_size {
            c.image_size = parse_pair("image_size", s, 'x')?;
        }
        if let Some(s) = &self.block_shape {
            let (m, n) = parse_pair("block_shape", s, 'x')?;
            c.block_shape = BlockShape { m, n };
        }
        if let Some(s) = &self.scale_range {
            c.scale_range = parse_pair("scale_range", s, ',')?;
        }
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set!(
            num_train_images => num_train_images,
            num_test_images => num_test_images,
            blocks_per_train_image => blocks_per_train_image,
            atoms_per_class => atoms_per_class,
            test_blocks => test_blocks,
            trials => trials,
            solver_lambda => solver.lambda,
            solver_max_iters => solver.max_iters,
            solver_tol => solver.tol,
            odl_lambda => odl.lambda,
            odl_epochs => odl.epochs,
            odl_batch_size => odl.batch_size,
            clutter_level => clutter_level,
            max_shift => max_shift,
            test_on_train => test_on_train,
            seed => seed,
        );
        if self.solver_epsilon.is_some() {
            c.solver.epsilon = self.solver_epsilon;
        }
        if let Some(s) = &self.fusion {
            c.fusion = s.parse()?;
        }
        if let Some(s) = &self.arms {
            c.arms = s
                .split(',')
                .map(|a| a.trim().parse())
                .collect::<Result<_>>()?;
        }
        if let Some(s) = &self.noise_densities {
            c.noise_densities = s
                .split(',')
                .map(|d| {
                    d.trim()
                        .parse()
                        .map_err(|_| Error::param("noise_densities", format!("cannot parse `{d}`")))
                })
                .collect::<Result<_>>()?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    class_id: usize,
    pose: Pose,
    seed: u64,
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn log_timings(timings: &Timings) {
    for (arm, secs) in &timings.seconds {
        eprintln!("{}: {secs:.1}s", arm.name());
    }
}

fn gen_data(out: &Path, trial: usize, config: &ExperimentConfig) -> Result<()> {
    let dataset = make_dataset(config, derive_seed(config.seed, trial as u64))?;
    for (split, samples) in [("train", &dataset.train), ("test", &dataset.test)] {
        let dir = out.join(split);
        fs::create_dir_all(&dir)?;
        let mut manifest = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let name = format!("{split}/{i:04}_class{}.pgm", s.class_id());
            fs::write(out.join(&name), save_pgm(&s.image))?;
            manifest.push(ManifestEntry {
                path: name,
                class_id: s.class_id(),
                pose: s.spec.target_pose,
                seed: s.spec.seed,
            });
        }
        fs::write(
            out.join(format!("{split}_manifest.json")),
            serde_json::to_vec_pretty(&manifest)?,
        )?;
    }
    Ok(())
}

fn train(manifest: &Path, out: &Path, arm: Arm, config: &ExperimentConfig) -> Result<()> {
    let entries: Vec<ManifestEntry> = serde_json::from_slice(&fs::read(manifest)?)
        .map_err(|e| Error::format("manifest", e.to_string()))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let images = entries
        .iter()
        .map(|e| {
            load_pgm(&fs::read(base.join(&e.path))?).map_err(|err| err.context(e.path.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let labeled: Vec<_> = images
        .iter()
        .zip(&entries)
        .map(|(img, e)| (img, e.class_id))
        .collect();
    let dict = train_arm(arm, config, &labeled, config.seed)?;
    fs::write(out, dict.to_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct GlobalDecision {
    predicted: usize,
    scores: Vec<f64>,
}

fn classify(dictionary: &Path, image: &Path, config: &ExperimentConfig) -> Result<()> {
    let dict = LabeledDictionary::from_bytes(&fs::read(dictionary)?)?;
    let image = load_pgm(&fs::read(image)?)?;
    let scorer = BlockScorer::new(&dict)?;
    let json = if dict.block_shape() == image.shape() {
        let (predicted, scores) = scorer.classify_global(&image, &config.solver)?;
        serde_json::to_string(&GlobalDecision {
            predicted,
            scores: scores.r,
        })?
    } else {
        scorer
            .classify_lpm(
                &image,
                config.test_blocks,
                &config.solver,
                config.fusion,
                config.seed,
            )?
            .to_json()?
    };
    println!("{json}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { out, trial, config } => gen_data(&out, trial, &config.resolve()?),
        Command::Train {
            manifest,
            out,
            arm,
            config,
        } => train(&manifest, &out, arm.parse()?, &config.resolve()?),
        Command::Classify {
            dictionary,
            image,
            config,
        } => classify(&dictionary, &image, &config.resolve()?),
        Command::Bench {
            format,
            out,
            config,
        } => {
            let format: ReportFormat = format.parse()?;
            let (metrics, timings) = run_experiment_timed(&config.resolve()?)?;
            log_timings(&timings);
            write_output(out.as_deref(), &emit_report(&metrics, format)?)
        }
        Command::NoiseSweep {
            format,
            out,
            config,
        } => {
            let format: ReportFormat = format.parse()?;
            let (sweep, timings) = noise_sweep_timed(&config.resolve()?)?;
            log_timings(&timings);
            write_output(out.as_deref(), &emit_sweep_report(&sweep, format)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
