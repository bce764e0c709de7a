use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use clap::{Args, Parser, Subcommand};

use sonomap::engine::Engine;
use sonomap::ingest::decode_wav;
use sonomap::live::{LiveError, LiveOptions, LiveRun};
use sonomap::render::render_csv;
use sonomap::session::{load_session, SessionConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "sonomap", version, about = "Audio feature extraction mapped to scene parameters")]
struct Cli {
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Process an input in real time, publishing OSC and serving the UI.
    Run(RunArgs),
    /// Process an input as fast as possible and write a CSV of every signal.
    Render(RenderArgs),
    /// Print the signal catalog a session produces.
    Signals(SignalsArgs),
    /// Check a session file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct StreamArgs {
    /// Session JSON file; defaults apply without one.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Frame size in samples (512, 1024, 2048 or 4096).
    #[arg(long)]
    frame: Option<usize>,
    /// Hop size in samples.
    #[arg(long)]
    hop: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Input WAV file (PCM16 or float32).
    #[arg(long)]
    input: PathBuf,
    /// OSC destination, host:port.
    #[arg(long)]
    osc_dest: Option<String>,
    /// WebSocket UI port.
    #[arg(long)]
    ui_port: Option<u16>,
    /// UI value push rate in Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Restart the input when it ends.
    #[arg(long = "loop")]
    loop_input: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    stream: StreamArgs,
    #[arg(long)]
    input: PathBuf,
    /// CSV output path; `-` writes to stdout.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SignalsArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// Print the catalog as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    session: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.to_string(),
    }
}

fn runtime_error(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.to_string(),
    }
}

fn load_config(args: &StreamArgs, sample_rate: Option<u32>) -> Result<SessionConfig, Failure> {
    let mut config = match &args.session {
        Some(path) => load_session(path).map_err(config_error)?,
        None => SessionConfig::default(),
    };
    if let Some(old) = config.override_stream(sample_rate, args.frame, args.hop) {
        log::warn!(
            "pitch_fmin raised from {old} Hz to {} Hz to fit the frame size",
            config.analysis.pitch_fmin
        );
    }
    config.validate().map_err(config_error)?;
    Ok(config)
}

fn read_wav(path: &Path) -> Result<(u32, Vec<f64>), Failure> {
    let bytes =
        std::fs::read(path).map_err(|e| runtime_error(format!("cannot read {}: {e}", path.display())))?;
    let audio = decode_wav(&bytes).map_err(|e| runtime_error(format!("{}: {e}", path.display())))?;
    Ok((audio.sample_rate, audio.samples))
}

fn render(args: RenderArgs) -> Result<(), Failure> {
    let (sample_rate, samples) = read_wav(&args.input)?;
    let config = load_config(&args.stream, Some(sample_rate))?;
    let mut engine = Engine::new(&config).map_err(config_error)?;
    let mut write = |out: &mut dyn Write| {
        let mut out = BufWriter::new(out);
        render_csv(&mut engine, &samples, &mut out)
    };
    let rows = if args.output.as_os_str() == "-" {
        write(&mut std::io::stdout().lock())
    } else {
        let mut file = File::create(&args.output)
            .map_err(|e| runtime_error(format!("cannot create {}: {e}", args.output.display())))?;
        write(&mut file)
    }
    .map_err(|e| runtime_error(format!("render failed: {e}")))?;
    log::info!("wrote {rows} frames");
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let (sample_rate, samples) = read_wav(&args.input)?;
    let config = load_config(&args.stream, Some(sample_rate))?;
    let mut options = LiveOptions::from_session(&config);
    if let Some(dest) = args.osc_dest {
        options.osc_dest = dest;
    }
    if let Some(port) = args.ui_port {
        options.ui_addr = format!("127.0.0.1:{port}");
    }
    if let Some(rate) = args.rate {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(config_error(format!("--rate must be positive, got {rate}")));
        }
        options.ui_rate_hz = rate;
    }
    options.loop_input = args.loop_input;
    options.session_path = args.stream.session.clone();

    let live = LiveRun::start(&config, samples, options).map_err(|e| match e {
        LiveError::Engine(e) => config_error(e),
        e => runtime_error(e),
    })?;
    let flag = live.shutdown_flag();
    ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed))
        .map_err(|e| runtime_error(format!("cannot install signal handler: {e}")))?;
    eprintln!("UI listening on ws://{}, OSC to {}", live.ui_addr(), live.osc_dest());
    let report = live.wait();
    log::info!(
        "processed {} frames, dropped {} frames and {} snapshots, {} OSC send errors",
        report.frames,
        report.dropped_frames,
        report.dropped_snapshots,
        report.osc_send_errors
    );
    Ok(())
}

fn signals(args: SignalsArgs) -> Result<(), Failure> {
    let config = load_config(&args.stream, None)?;
    let engine = Engine::new(&config).map_err(config_error)?;
    let descriptors = engine.registry().catalog().descriptors();
    let mut out = std::io::stdout().lock();
    let result = if args.json {
        serde_json::to_writer_pretty(&mut out, descriptors)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(out))
    } else {
        descriptors.iter().try_for_each(|d| {
            writeln!(
                out,
                "{}\t{}\t{}\t[{}, {}]\t{}",
                d.id,
                serde_json::to_value(d.direction).unwrap().as_str().unwrap(),
                serde_json::to_value(d.value_kind).unwrap().as_str().unwrap(),
                d.range_min,
                d.range_max,
                d.unit
            )
        })
    };
    result.map_err(runtime_error)
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let config = load_session(&args.session).map_err(config_error)?;
    println!(
        "{}: ok ({} mappings, {} bands)",
        args.session.display(),
        config.mappings.len(),
        config.subbands.n_bands
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Verb::Run(args) => run(args),
        Verb::Render(args) => render(args),
        Verb::Signals(args) => signals(args),
        Verb::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
