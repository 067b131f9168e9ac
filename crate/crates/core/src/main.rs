use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ssws::codec::{read_wav, write_wav, AudioBuffer, MuLaw};
use ssws::conditioning::{
    generate_synthetic_features, read_features, read_features_text, write_features, FrameFeatures,
};
use ssws::config::KeyValues;
use ssws::mushra::{
    aggregate_by_domain, aggregate_by_system, build_assignment, read_flags, read_ratings,
    render_error_report, summarize, validate_assignment, Assignment, ErrorCategory, FlagFilter,
    TestPlan,
};
use ssws::neural::read_checkpoint;
use ssws::sampler::{synthesize, write_bin_trace, SamplerConfig, SynthTrace};
use ssws::service::{serve, ServiceConfig};
use ssws::trainer::{
    harmonic_signal, load_manifest, train, write_loss_trace, TrainOutput, TrainRunConfig,
    Utterance, TRAIN_KEYS,
};
use ssws::wavenet::{ModelConfig, MODEL_KEYS};

#[derive(Parser)]
#[command(
    name = "ssws",
    version,
    about = "Waveform synthesis engine and MUSHRA evaluation workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// μ-law encode/decode between WAV files and bin lists.
    #[command(subcommand)]
    Codec(CodecCommand),
    /// Derive conditioning features (pitch-tracked v/uv + log-f0, seeded
    /// linguistic placeholders) from audio.
    Features(FeaturesArgs),
    /// Train a model from a manifest or the built-in harmonic fixture.
    Train(TrainArgs),
    /// Synthesize audio from features with a trained checkpoint.
    Synth(SynthArgs),
    /// Build a balanced listener assignment from a test plan.
    Design(DesignArgs),
    /// Check an assignment against its plan.
    Validate(ValidateArgs),
    /// Run the listening-test HTTP service.
    Serve(ServeArgs),
    /// MUSHRA statistics from a ratings CSV.
    Analyze(AnalyzeArgs),
    /// Error-flag tables from a flags CSV.
    ErrorsReport(ErrorsArgs),
}

#[derive(Subcommand)]
enum CodecCommand {
    /// WAV → one bin index per line.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Quantization levels.
        #[arg(long, default_value_t = 1024)]
        bins: usize,
    },
    /// Bin list → WAV (bin centres).
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1024)]
        bins: usize,
        #[arg(long, default_value_t = 24_000)]
        sample_rate: u32,
    },
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Samples per frame.
    #[arg(long, default_value_t = 120)]
    hop: usize,
    /// Seed for the linguistic placeholder dimensions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` file with model keys, training keys, and optionally
    /// `manifest`, `output_dir`, `feature_seed`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus manifest (overrides the config's `manifest`).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Train on a 2 s harmonic tone at this f0 instead of a manifest.
    #[arg(long)]
    fixture_f0: Option<f64>,
    /// Directory for model.ckpt, model.cfg, loss_trace.csv (default: `train_out`).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    anneal_factor: Option<f64>,
    /// Fail (exit 1) if the final epoch loss is not below this value.
    #[arg(long)]
    max_final_loss: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Model config (default: model.cfg next to the checkpoint).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Binary (`.feat`) or text (`.txt`) features.
    #[arg(long, conflicts_with = "audio")]
    features: Option<PathBuf>,
    /// Derive features from this WAV instead.
    #[arg(long)]
    audio: Option<PathBuf>,
    /// Seed for derived features' linguistic dimensions.
    #[arg(long, default_value_t = 0)]
    feature_seed: u64,
    #[arg(long)]
    output: PathBuf,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a `sample,bin,amplitude` CSV.
    #[arg(long)]
    bin_trace: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Overrides the plan's `# seed` directive.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "assignment.json")]
    output: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    assignment: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// `key = value` file (bind, port, assignment, audio_root, log, token_salt).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    assignment: Option<PathBuf>,
    #[arg(long)]
    audio_root: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = ssws::mushra::DEFAULT_ALPHA)]
    alpha: f64,
    /// Comma-separated system order (default: first appearance).
    #[arg(long, value_delimiter = ',')]
    systems: Option<Vec<String>>,
    /// Also write report.txt, summary.csv, pairwise.csv, plot_data.csv, report.json here.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ErrorsArgs {
    #[arg(long)]
    flags: PathBuf,
    /// Assignment JSON supplying systems and utterance domains.
    #[arg(long)]
    assignment: PathBuf,
    /// Per-domain table: only this system.
    #[arg(long)]
    system: Option<String>,
    /// Per-domain table: only this category (e.g. "audio glitch").
    #[arg(long)]
    category: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn codec(cmd: CodecCommand) -> Result<()> {
    match cmd {
        CodecCommand::Encode {
            input,
            output,
            bins,
        } => {
            let codec = MuLaw::new(bins)?;
            let audio = read_wav(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(&output)?);
            for b in codec.encode_all(audio.samples())? {
                writeln!(w, "{b}")?;
            }
            w.flush()?;
            eprintln!("{} samples → {}", audio.len(), output.display());
        }
        CodecCommand::Decode {
            input,
            output,
            bins,
            sample_rate,
        } => {
            let codec = MuLaw::new(bins)?;
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let idx = text
                .split_whitespace()
                .map(|t| t.parse::<usize>().with_context(|| format!("bad bin `{t}`")))
                .collect::<Result<Vec<_>>>()?;
            write_wav(
                &output,
                &AudioBuffer::new(sample_rate, codec.decode_all(&idx)?)?,
            )?;
            eprintln!("{} bins → {}", idx.len(), output.display());
        }
    }
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let audio = read_wav(&a.audio).with_context(|| format!("reading {}", a.audio.display()))?;
    let f = generate_synthetic_features(&audio, a.hop, a.seed)?;
    write_features(&a.output, &f)?;
    let voiced = (0..f.frames()).filter(|&i| f.is_voiced(i)).count();
    println!(
        "{} frames ({} voiced) → {}",
        f.frames(),
        voiced,
        a.output.display()
    );
    Ok(())
}

const TRAIN_EXTRA_KEYS: &[&str] = &["manifest", "output_dir", "feature_seed"];

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut kv = match &a.config {
        Some(p) => KeyValues::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => KeyValues::default(),
    };
    let known: Vec<&str> = MODEL_KEYS
        .iter()
        .chain(TRAIN_KEYS)
        .chain(TRAIN_EXTRA_KEYS)
        .copied()
        .collect();
    kv.reject_unknown(&known)?;
    if let Some(v) = a.epochs {
        kv.set("epochs", v);
    }
    if let Some(v) = a.seed {
        kv.set("seed", v);
    }
    if let Some(v) = a.batch_size {
        kv.set("batch_size", v);
    }
    if let Some(v) = a.learning_rate {
        kv.set("learning_rate", v);
    }
    if let Some(v) = a.anneal_factor {
        kv.set("anneal_factor", v);
    }
    let model = ModelConfig::from_key_values(&kv)?;
    let run = TrainRunConfig::from_key_values(&kv)?;
    let config_dir = a
        .config
        .as_deref()
        .and_then(Path::parent)
        .unwrap_or(Path::new("."));
    let out_dir = match (a.output_dir, kv.get::<String>("output_dir")?) {
        (Some(d), _) => d,
        (None, Some(d)) => config_dir.join(d),
        (None, None) => PathBuf::from("train_out"),
    };
    let utterances = match (a.fixture_f0, a.manifest, kv.get::<String>("manifest")?) {
        (Some(f0), _, _) => {
            let audio = harmonic_signal(model.sample_rate, 2.0, f0, &[0.5, 0.25, 0.125]);
            let feats = generate_synthetic_features(&audio, model.hop_size, run.seed)?;
            vec![Utterance::from_audio(
                "fixture",
                "fixture",
                &audio,
                feats,
                &MuLaw::new(model.stack.bins)?,
            )?]
        }
        (None, Some(m), _) => load_manifest(&m, &model, kv.get_or("feature_seed", 0)?)?,
        (None, None, Some(m)) => {
            load_manifest(&config_dir.join(m), &model, kv.get_or("feature_seed", 0)?)?
        }
        (None, None, None) => bail!(
            "no training data: pass --manifest, --fixture-f0, or set `manifest` in the config"
        ),
    };
    eprintln!(
        "training {} utterance(s), receptive field {} samples, {} epochs",
        utterances.len(),
        model.stack.receptive_field(),
        run.epochs
    );
    let output = TrainOutput { dir: out_dir };
    let outcome = train(&utterances, &model, &run, None, Some(&output))?;
    write_loss_trace(&output.trace_path(), &outcome.trace)?;
    let last = outcome.trace.last().context("no epochs ran")?;
    println!(
        "final loss {:.6} after {} epochs → {}",
        last.loss,
        outcome.trace.len(),
        output.dir.display()
    );
    if let Some(limit) = a.max_final_loss {
        if !(last.loss < limit) {
            bail!("final loss {} is not below {limit}", last.loss);
        }
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg_path = a.config.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("model.cfg")
    });
    let model =
        ModelConfig::load(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
    let (params, _) = read_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let feats: FrameFeatures = match (&a.features, &a.audio) {
        (Some(p), _) if p.extension().is_some_and(|x| x == "txt") => {
            read_features_text(p, model.hop_size)?
        }
        (Some(p), _) => read_features(p)?,
        (None, Some(w)) => {
            generate_synthetic_features(&read_wav(w)?, model.hop_size, a.feature_seed)?
        }
        (None, None) => bail!("pass --features or --audio"),
    };
    let mut trace = SynthTrace::default();
    let sampler = SamplerConfig {
        seed: a.seed,
        ..Default::default()
    };
    let (audio, bins) = synthesize(&feats, &params, &model, &sampler, Some(&mut trace))?;
    write_wav(&a.output, &audio)?;
    if let Some(t) = &a.bin_trace {
        write_bin_trace(t, &bins, &MuLaw::new(model.stack.bins)?)?;
    }
    println!(
        "{} samples in {} chunk(s) → {}",
        audio.len(),
        trace.chunks.len(),
        a.output.display()
    );
    Ok(())
}

fn design(a: DesignArgs) -> Result<()> {
    let mut plan =
        TestPlan::load(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    let asg = build_assignment(&plan)?;
    let violations = validate_assignment(&asg, &plan);
    if !violations.is_empty() {
        bail!(
            "internal error: built assignment has {} violation(s): {}",
            violations.len(),
            violations[0]
        );
    }
    std::fs::write(&a.output, asg.to_json() + "\n")?;
    println!(
        "{} listeners × {} screens, seed {} → {}",
        asg.listeners.len(),
        plan.screens_per_listener,
        plan.seed,
        a.output.display()
    );
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let plan = TestPlan::load(&a.plan)?;
    let asg = Assignment::load(&a.assignment)?;
    let v = validate_assignment(&asg, &plan);
    for x in &v {
        println!("{x}");
    }
    if !v.is_empty() {
        bail!("{} violation(s)", v.len());
    }
    println!("assignment is valid");
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let kv = match &a.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    let mut c = ServiceConfig::from_key_values(&kv)?;
    if let Some(d) = a.config.as_deref().and_then(Path::parent) {
        for p in [&mut c.assignment, &mut c.audio_root, &mut c.log] {
            if p.is_relative() {
                *p = d.join(&*p);
            }
        }
    }
    c.bind = a.bind.unwrap_or(c.bind);
    c.port = a.port.unwrap_or(c.port);
    c.assignment = a.assignment.unwrap_or(c.assignment);
    c.audio_root = a.audio_root.unwrap_or(c.audio_root);
    c.log = a.log.unwrap_or(c.log);
    tokio::runtime::Runtime::new()?.block_on(serve(&c))?;
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let ratings =
        read_ratings(&a.ratings).with_context(|| format!("reading {}", a.ratings.display()))?;
    let report = summarize(&ratings, a.systems.as_deref(), a.alpha)?;
    print!("{}", report.to_text());
    if let Some(d) = &a.output_dir {
        report.write_all(d)?;
    }
    Ok(())
}

fn errors_report(a: ErrorsArgs) -> Result<()> {
    let flags = read_flags(&a.flags)?;
    let asg = Assignment::load(&a.assignment)?;
    let domains: Vec<(String, String)> = asg
        .utterances
        .iter()
        .map(|u| (u.id.clone(), u.domain.clone()))
        .collect();
    let filter = FlagFilter {
        system: a.system,
        category: a
            .category
            .as_deref()
            .map(str::parse::<ErrorCategory>)
            .transpose()?,
    };
    let text = render_error_report(
        &aggregate_by_system(&flags, &asg.systems),
        &aggregate_by_domain(&flags, &domains, &filter)?,
        &filter,
    );
    match &a.output {
        Some(p) => std::fs::write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codec(c) => codec(c),
        Command::Features(a) => features(a),
        Command::Train(a) => train_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Design(a) => design(a),
        Command::Validate(a) => validate(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::ErrorsReport(a) => errors_report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
