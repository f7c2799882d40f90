use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};

use winoconv_cli::runner::DEFAULT_SEED;
use winoconv_cli::{
    emit_report, enforce_tolerances, load_layer_table, run_sweep, BenchError, BenchOptions, Format,
    SweepOptions, Variant,
};

/// Times Winograd convolution variants against im2row, layer by layer.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
#[command(group(ArgGroup::new("source").required(true).args(["network", "layers"])))]
struct Args {
    /// Built-in network: vgg16, vgg19, googlenet, inception-v3 or squeezenet.
    #[arg(long)]
    network: Option<String>,

    /// Layer table CSV.
    #[arg(long)]
    layers: Option<PathBuf>,

    /// Variant to run; repeatable. Defaults to every applicable variant.
    #[arg(long = "variant", value_parser = clap::value_parser!(Variant))]
    variants: Vec<Variant>,

    #[arg(long, default_value_t = 5)]
    reps: usize,

    /// Compare against direct convolution and fail on tolerance violations.
    #[arg(long)]
    check: bool,

    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Divide every layer's channel counts by this factor.
    #[arg(long, default_value_t = 1)]
    scale: usize,

    #[arg(long, default_value = "csv")]
    format: Format,

    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn run(args: Args) -> Result<(), BenchError> {
    let source = match (&args.network, &args.layers) {
        (Some(net), _) => net.clone(),
        (None, Some(path)) => path.to_string_lossy().into_owned(),
        (None, None) => unreachable!("clap requires a source"),
    };
    let layers = load_layer_table(&source)?;
    let opts = SweepOptions {
        bench: BenchOptions {
            reps: args.reps,
            check: args.check,
            seed: args.seed,
            threads: args.threads,
            ..BenchOptions::default()
        },
        scale: args.scale,
        variants: args.variants,
    };
    let run = run_sweep(&layers, &opts)?;
    for s in &run.skipped {
        eprintln!("skipped {} on {}: {}", s.variant, s.layer, s.reason);
    }
    let text = emit_report(&run.records, args.format)?;
    match args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    if args.check {
        enforce_tolerances(&run.records)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
