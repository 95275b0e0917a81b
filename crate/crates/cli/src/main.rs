use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tnq_core::analysis;
use tnq_core::plan;
use tnq_core::quantizer::{EncodedGradient, GradientVector, Scheme};
use tnq_core::rng::{self, Purpose};
use tnq_core::simtrain::{self, ExperimentConfig, SweepSpec};
use tnq_core::Error;

#[derive(Parser)]
#[command(name = "tnq", version, about = "Truncated non-uniform gradient quantization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model error of every scheme at its optimal parameters, as CSV.
    Analyze {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        clients: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        bits_list: Vec<u8>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Encode a text file of numbers into a TNQ1 file.
    Quantize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "tnq")]
        scheme: Scheme,
        #[arg(long, default_value_t = 3)]
        bits: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the header and decoded statistics of a TNQ1 file.
    Inspect {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run one simulated training job from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scheme x bits x seed grid and write the tradeoff CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        bits: Vec<u8>,
        #[arg(long, value_delimiter = ',', default_value = "tnq,tuq,nq,uq,dsgd")]
        schemes: Vec<String>,
        /// Number of seeds, counted up from the config's `seed`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Format(_) | Error::Length { .. } | Error::Corrupt(_) | Error::Consistency(_) => 3,
        Error::Numerical(_) | Error::Diverged { .. } | Error::Degenerate(_) | Error::Normalization { .. } => 4,
        _ => 2,
    }
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> tnq_core::Result<()>) -> tnq_core::Result<()> {
    match path {
        Some(p) => {
            let mut file = io::BufWriter::new(fs::File::create(p)?);
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn analyze(gamma: f64, dim: usize, clients: usize, bits: &[u8], output: Option<&Path>) -> tnq_core::Result<()> {
    let rows = analysis::scheme_table(gamma, dim, clients, bits)?;
    with_output(output, |w| {
        writeln!(w, "scheme,b,s,alpha,variance,bias,total,normalized_total")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.scheme.name(),
                r.bits,
                r.levels,
                r.alpha,
                r.breakdown.variance,
                r.breakdown.bias,
                r.breakdown.total,
                r.normalized()
            )?;
        }
        Ok(())
    })
}

fn read_numbers(path: &Path) -> tnq_core::Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("'{t}' is not a number"))))
        .collect()
}

fn quantize(input: &Path, output: &Path, scheme: Scheme, bits: u8, seed: u64) -> tnq_core::Result<()> {
    let g = GradientVector::new(read_numbers(input)?)?;
    let encoded = plan::compress_layer(scheme, bits, &g, &mut rng::global(seed, Purpose::Quantize))?;
    fs::write(output, encoded.to_bytes())?;
    println!("wrote {} bytes ({} bits) for {} values", encoded.to_bytes().len(), encoded.wire_bits(), g.dim());
    Ok(())
}

fn inspect(input: &Path) -> tnq_core::Result<()> {
    let encoded = EncodedGradient::from_bytes(&fs::read(input)?)?;
    let h = &encoded.header;
    let decoded = plan::decompress_layer(&encoded)?;
    let v = decoded.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mean_abs = v.iter().map(|x| x.abs()).sum::<f64>() / n;
    let (min, max) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    println!("scheme: {}", h.scheme.name());
    println!("bits: {}", h.bits);
    println!("levels: {}", h.levels());
    println!("alpha: {}", h.alpha);
    println!("gamma: {}", h.gamma);
    println!("dim: {}", h.dim);
    println!("zero_marker: {}", h.is_zero_marker());
    println!("wire_bits: {}", encoded.wire_bits());
    println!("decoded_mean: {mean}");
    println!("decoded_mean_abs: {mean_abs}");
    println!("decoded_min: {min}");
    println!("decoded_max: {max}");
    if !h.is_zero_marker() {
        let mut counts = vec![0usize; h.levels() + 1];
        for k in encoded.indices()? {
            counts[k as usize] += 1;
        }
        let hist: Vec<String> = counts.iter().map(ToString::to_string).collect();
        println!("index_counts: {}", hist.join(","));
    }
    Ok(())
}

fn train(config: &Path) -> tnq_core::Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let (train, test) = cfg.load_data()?;
    let model = cfg.model_spec(&train)?;
    let metrics = simtrain::run(&cfg.train, &model, &train, test.as_ref())?;
    if let Some(p) = &cfg.metrics {
        with_output(Some(p), |w| metrics.write_csv(w))?;
    }
    if let Some(p) = &cfg.gammas {
        with_output(Some(p), |w| metrics.write_gamma_csv(w))?;
    }
    println!(
        "scheme={} final_loss={} final_score={} total_bits={}",
        metrics.label,
        metrics.final_loss(),
        metrics.final_score(),
        metrics.total_bits()
    );
    Ok(())
}

fn sweep(config: &Path, bits: Vec<u8>, schemes: &[String], seeds: u64, output: Option<&Path>) -> tnq_core::Result<()> {
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let base = ExperimentConfig::from_file(config)?;
    let schemes = schemes
        .iter()
        .map(|s| match s.trim() {
            "dsgd" | "none" => Ok(None),
            other => other.parse::<Scheme>().map(Some).map_err(|_| Error::Config(format!("unknown scheme '{other}'"))),
        })
        .collect::<tnq_core::Result<Vec<_>>>()?;
    let first = base.train.seed;
    let spec = SweepSpec { base, schemes, bits, seeds: (first..first + seeds).collect() };
    let report = simtrain::run_sweep(&spec)?;
    with_output(output, |w| report.write_csv(w))
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("TNQ_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("TNQ_THREADS must be a positive integer, got '{raw}'"))?;
    if n == 0 {
        return Err("TNQ_THREADS must be a positive integer, got '0'".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Analyze { gamma, dim, clients, bits_list, output } => {
            analyze(gamma, dim, clients, &bits_list, output.as_deref())
        }
        Command::Quantize { input, output, scheme, bits, seed } => quantize(&input, &output, scheme, bits, seed),
        Command::Inspect { input } => inspect(&input),
        Command::Train { config } => train(&config),
        Command::Sweep { config, bits, schemes, seeds, output } => sweep(&config, bits, &schemes, seeds, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
