use std::fmt::Write as _;
use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use diffsteg::channel::default_grid;
use diffsteg::ddim::StepSequence;
use diffsteg::eval::{psnr, psnr_u8, rms, robustness_sweep, SweepReport, SweepSettings};
use diffsteg::stego::{hide, reveal, round_trip};
use diffsteg::{ConditionKey, EstimatorRegistry, ImageVector, SolverConfig, StegoJob};

use crate::config::Loaded;
use crate::error::{data, usage, CliError, Result};
use crate::pnm;
use crate::prior_spec::{ComponentSpec, KeySpec, PriorSpec};
use crate::sidecar::{self, Sidecar};

#[derive(Debug, Parser)]
#[command(name = "diffsteg", version, about = "Hide an image inside another with keyed diffusion priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a secret image into a container image.
    Hide(HideArgs),
    /// Recover the secret from a container.
    Reveal(RevealArgs),
    /// Invert and regenerate an image under one key and report the error.
    Roundtrip(RoundtripArgs),
    /// Hide, degrade and reveal a corpus over a grid of channels.
    Bench(BenchArgs),
    /// Build or extend a prior spec from template images.
    MakePrior(MakePriorArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Solver steps; overrides the config.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Master seed; overrides the config. Only stochastic stages use it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write private key names and inversion latents into outputs.
    #[arg(long = "unsafe-diagnostics")]
    pub unsafe_diagnostics: bool,
}

#[derive(Debug, Args)]
pub struct HideArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub secret: PathBuf,
    #[arg(long = "private-key")]
    pub private_key: Option<String>,
    #[arg(long = "public-key")]
    pub public_key: Option<String>,
    /// Container path; the sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RevealArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub container: PathBuf,
    /// Read from stdin when neither this flag nor the config gives one.
    #[arg(long = "private-key")]
    pub private_key: Option<String>,
    /// Defaults to the key named in the sidecar.
    #[arg(long = "public-key")]
    pub public_key: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub secret: PathBuf,
    /// Key to invert under; defaults to the configured private key.
    #[arg(long = "private-key")]
    pub private_key: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of PNM secrets; overrides `bench.corpus`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long = "private-key")]
    pub private_key: Option<String>,
    #[arg(long = "public-key")]
    pub public_key: Option<String>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakePriorArgs {
    /// Name of the key to create or replace.
    #[arg(long)]
    pub key: String,
    /// Per-component variance.
    #[arg(long)]
    pub variance: f64,
    /// Spec file to write. An existing spec is extended.
    #[arg(long)]
    pub out: PathBuf,
    /// Template images, one equal-weight component each.
    #[arg(required = true)]
    pub templates: Vec<PathBuf>,
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Hide(a) => cmd_hide(&a),
        Command::Reveal(a) => cmd_reveal(&a),
        Command::Roundtrip(a) => cmd_roundtrip(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::MakePrior(a) => cmd_make_prior(&a),
    }
}

struct Session {
    loaded: Loaded,
    registry: EstimatorRegistry,
    solver: SolverConfig,
}

impl Session {
    fn open(common: &Common) -> Result<Self> {
        let loaded = Loaded::from_file(&common.config)?;
        let registry = loaded.registry()?;
        let solver = SolverConfig::new(common.steps.unwrap_or(loaded.config.solver.steps));
        solver.validate(registry.schedule().num_steps())?;
        Ok(Self { loaded, registry, solver })
    }

    fn key(&self, flag: &Option<String>, configured: &Option<String>, role: &str) -> Result<ConditionKey> {
        let name = flag
            .as_ref()
            .or(configured.as_ref())
            .ok_or_else(|| usage(format!("no {role} key: pass --{role}-key or set keys.{role} in the config")))?;
        Ok(self.registry.key(name)?)
    }

    fn grid(&self) -> Result<StepSequence> {
        Ok(StepSequence::uniform(self.registry.schedule().num_steps(), &self.solver)?)
    }

    fn default_out(&self, stem: &str) -> PathBuf {
        self.loaded.output_dir().join(format!("{stem}.{}", pnm::extension(self.registry.shape())))
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

fn cmd_hide(args: &HideArgs) -> Result<()> {
    let s = Session::open(&args.common)?;
    let cfg = &s.loaded.config.keys;
    let private = s.key(&args.private_key, &cfg.private, "private")?;
    let public = s.key(&args.public_key, &cfg.public, "public")?;
    let diagnostics = args.common.unsafe_diagnostics;

    let secret = pnm::read(&args.secret)?;
    let job = StegoJob::new(secret, private.clone(), public.clone(), s.solver)
        .diagnostic(diagnostics)
        .keep_latent(diagnostics);
    let result = hide(&job, &s.registry)?;

    let out = args.out.clone().unwrap_or_else(|| s.default_out("container"));
    create_parent(&out)?;
    pnm::write(&out, &result.container)?;

    let mut meta = Sidecar {
        format: sidecar::FORMAT.to_owned(),
        public_key: public.name().to_owned(),
        shape: result.container.shape(),
        solver_steps: s.solver.num_solver_steps,
        schedule: s.loaded.config.schedule,
        schedule_hash: sidecar::schedule_hash(s.registry.schedule()),
        grid_hash: sidecar::grid_hash(s.registry.schedule(), &s.grid()?),
        private_key: None,
        latent: None,
    };
    if diagnostics {
        meta.private_key = Some(private.name().to_owned());
        if let Some(latent) = &result.latent {
            let path = PathBuf::from(format!("{}.latent.json", out.display()));
            let text = serde_json::to_string(latent.as_slice()).map_err(|e| data(e.to_string()))?;
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            meta.latent = path.file_name().map(PathBuf::from);
        }
    }
    meta.write(&sidecar::path_for(&out))?;
    println!("container {} ({})", out.display(), meta.shape);
    Ok(())
}

fn prompt_private_key() -> Result<String> {
    let stdin = std::io::stdin();
    if stdin.is_terminal() {
        eprint!("private key: ");
        std::io::stderr().flush().ok();
    }
    let mut line = String::new();
    stdin.lock().read_line(&mut line).map_err(|e| usage(format!("cannot read private key: {e}")))?;
    let name = line.trim();
    if name.is_empty() {
        return Err(usage("no private key: pass --private-key, set keys.private, or type it on stdin"));
    }
    Ok(name.to_owned())
}

fn cmd_reveal(args: &RevealArgs) -> Result<()> {
    let s = Session::open(&args.common)?;
    let container = pnm::read(&args.container)?;
    let meta_path = sidecar::path_for(&args.container);
    let meta = if meta_path.exists() {
        Some(Sidecar::read(&meta_path)?)
    } else if args.public_key.is_some() && args.common.steps.is_some() {
        None
    } else {
        return Err(data(format!(
            "missing sidecar {}; without it pass both --public-key and --steps",
            meta_path.display()
        )));
    };

    if let Some(meta) = &meta {
        if meta.shape != container.shape() {
            return Err(data(format!("container is {} but its sidecar says {}", container.shape(), meta.shape)));
        }
        if meta.schedule_hash != sidecar::schedule_hash(s.registry.schedule()) {
            return Err(data(
                "refusing to reveal: the container was made with a different noise schedule than this config",
            ));
        }
        if args.common.steps.is_none() {
            if meta.solver_steps != s.solver.num_solver_steps {
                return Err(data(format!(
                    "refusing to reveal: sidecar records {} solver steps, config has {}; pass --steps to override",
                    meta.solver_steps, s.solver.num_solver_steps
                )));
            }
            if meta.grid_hash != sidecar::grid_hash(s.registry.schedule(), &s.grid()?) {
                return Err(data("refusing to reveal: solver grid differs from the sidecar"));
            }
        }
    }

    let sidecar_public = meta.as_ref().map(|m| m.public_key.clone());
    let public = s.key(&args.public_key.clone().or(sidecar_public), &s.loaded.config.keys.public, "public")?;
    let private_name = match args.private_key.clone().or_else(|| s.loaded.config.keys.private.clone()) {
        Some(name) => name,
        None => prompt_private_key()?,
    };
    let private = s.registry.key(&private_name)?;

    let revealed = reveal(&container, &public, &private, &s.solver, &s.registry)?;
    let out = args.out.clone().unwrap_or_else(|| s.default_out("revealed"));
    create_parent(&out)?;
    pnm::write(&out, &revealed)?;
    println!("revealed {}", out.display());
    Ok(())
}

fn cmd_roundtrip(args: &RoundtripArgs) -> Result<()> {
    let s = Session::open(&args.common)?;
    let key = s.key(&args.private_key, &s.loaded.config.keys.private, "private")?;
    let image = pnm::read(&args.secret)?;
    let back = round_trip(&image, &key, &s.solver, &s.registry)?;
    if let Some(out) = &args.out {
        create_parent(out)?;
        pnm::write(out, &back)?;
    }
    println!(
        "key={} steps={} rms={:.6} psnr={:.3} psnr_u8={:.3}",
        key.name(),
        s.solver.num_solver_steps,
        rms(&image, &back)?,
        psnr(&image, &back)?,
        psnr_u8(&image, &back)?
    );
    Ok(())
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_pnm = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "ppm" | "pnm"));
        if is_pnm && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let s = Session::open(&args.common)?;
    let cfg = &s.loaded.config;
    let private = s.key(&args.private_key, &cfg.keys.private, "private")?;
    let public = s.key(&args.public_key, &cfg.keys.public, "public")?;

    let dir = match (&args.corpus, &cfg.bench.corpus) {
        (Some(flag), _) => flag.clone(),
        (None, Some(path)) => s.loaded.resolve(path),
        (None, None) => return Err(usage("no corpus: pass --corpus or set bench.corpus")),
    };
    let files = corpus_files(&dir)?;
    if files.is_empty() {
        return Err(data(format!("corpus {} holds no .pgm/.ppm/.pnm images", dir.display())));
    }
    let corpus: Vec<ImageVector> = files.iter().map(|p| pnm::read(p)).collect::<Result<_>>()?;

    let grid = cfg.bench.grid.clone().unwrap_or_else(default_grid);
    let seed = args.common.seed.or(cfg.seed);
    if seed.is_none() && grid.iter().any(|g| g.is_stochastic()) {
        return Err(data("the grid has stochastic channels; set `seed` in the config or pass --seed"));
    }
    if corpus.len() == 1 {
        eprintln!("warning: corpus has a single image; each row averages {} trial(s)", cfg.bench.repeats);
    }
    let settings = SweepSettings { grid, solver: s.solver, seed: seed.unwrap_or(0), repeats: cfg.bench.repeats };
    let mut report = robustness_sweep(&corpus, &private, &public, &settings, &s.registry)?;
    if !args.common.unsafe_diagnostics {
        report.config.private_key = None;
    }

    let out = args.out.clone().unwrap_or_else(|| s.loaded.output_dir());
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let csv_path = out.join("report.csv");
    std::fs::write(&csv_path, report_csv(&report)?).map_err(|e| CliError::io(&csv_path, e))?;
    let json_path = out.join("report.json");
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| data(e.to_string()))?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| CliError::io(&json_path, e))?;

    println!("{:<16}{:>9}{:>11}{:>11}{:>9}", "channel", "severity", "psnr", "psnr_u8", "class");
    for r in &report.rows {
        let class = r.class_agreement.map_or("-".to_owned(), |c| format!("{c:.2}"));
        println!("{:<16}{:>9}{:>11.3}{:>11.3}{:>9}", r.kind.as_str(), r.severity, r.mean_psnr, r.mean_psnr_u8, class);
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

/// Rows as CSV, preceded by `#` lines carrying the run settings.
pub fn report_csv(report: &SweepReport) -> Result<Vec<u8>> {
    let c = &report.config;
    let mut head = String::new();
    let _ = writeln!(head, "# public_key={}", c.public_key);
    let _ = writeln!(head, "# private_key={}", c.private_key.as_deref().unwrap_or("<redacted>"));
    let _ = writeln!(head, "# corpus_size={}", c.corpus_size);
    let _ = writeln!(head, "# schedule_steps={}", c.schedule_steps);
    let _ = writeln!(head, "# solver_steps={}", c.settings.solver.num_solver_steps);
    let _ = writeln!(head, "# seed={}", c.settings.seed);
    let _ = writeln!(head, "# repeats={}", c.settings.repeats);
    let grid: Vec<String> = c.settings.grid.iter().map(|g| g.label()).collect();
    let _ = writeln!(head, "# grid={}", grid.join(";"));

    let mut w = csv::Writer::from_writer(head.into_bytes());
    w.write_record(["kind", "severity", "mean_psnr", "mean_psnr_u8", "mean_rms", "class_agreement", "trials"])
        .map_err(|e| data(e.to_string()))?;
    for r in &report.rows {
        w.write_record([
            r.kind.as_str().to_owned(),
            r.severity.to_string(),
            r.mean_psnr.to_string(),
            r.mean_psnr_u8.to_string(),
            r.mean_rms.to_string(),
            r.class_agreement.map(|v| v.to_string()).unwrap_or_default(),
            r.trials.to_string(),
        ])
        .map_err(|e| data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| data(e.to_string()))
}

/// `path` expressed relative to the directory `base`, climbing with `..`
/// where needed. Falls back to the absolute path across filesystem roots.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let abs = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    let Ok(base) = std::fs::canonicalize(base) else {
        return abs;
    };
    let a: Vec<_> = abs.components().collect();
    let b: Vec<_> = base.components().collect();
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return abs;
    }
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    rel.extend(&a[common..]);
    rel
}

fn cmd_make_prior(args: &MakePriorArgs) -> Result<()> {
    if !(args.variance > 0.0 && args.variance.is_finite()) {
        return Err(usage(format!("--variance must be positive, got {}", args.variance)));
    }
    let images: Vec<ImageVector> = args.templates.iter().map(|p| pnm::read(p)).collect::<Result<_>>()?;
    let shape = images[0].shape();
    for (path, img) in args.templates.iter().zip(&images) {
        if img.shape() != shape {
            return Err(data(format!("{} is {}, first template is {shape}", path.display(), img.shape())));
        }
    }

    let mut spec = if args.out.exists() { PriorSpec::load(&args.out)? } else { PriorSpec::new(shape) };
    if spec.shape() != shape {
        return Err(data(format!("{} describes {} images, templates are {shape}", args.out.display(), spec.shape())));
    }
    create_parent(&args.out)?;
    let base = match args.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let weight = 1.0 / images.len() as f64;
    let components = args
        .templates
        .iter()
        .map(|p| ComponentSpec { weight, variance: args.variance, image: Some(relative_to(p, &base)), mean: None })
        .collect();
    let replaced = spec.keys.insert(args.key.clone(), KeySpec::Mixture { components }).is_some();
    // Catch weight or variance problems before anything is written.
    spec.registry(&base, diffsteg::NoiseSchedule::default_linear())?;

    std::fs::write(&args.out, spec.to_toml()?).map_err(|e| CliError::io(&args.out, e))?;
    let verb = if replaced { "replaced" } else { "added" };
    println!("{verb} key `{}` ({} components) in {}", args.key, images.len(), args.out.display());
    Ok(())
}
