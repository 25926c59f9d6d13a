//! `rescodec` command-line front end.
//!
//! Errors go to stderr as a single `error[<code>]: <message>` line (followed
//! by usage text for argument and missing-file errors); the exit status is 2
//! for usage problems and 1 for everything else.

pub mod config;
pub mod container;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rescodec::codec::{dequantize, encode_latent, quantize, read_latent_section, EntropyModel, QuantizedLatent};
use rescodec::denoiser::{AnyDenoiser, GaussianDenoiser, Mlp, OracleDenoiser, QuantNoise, TrainConfig};
use rescodec::diffusion::{sample, step_list, GaussianNoise, ResidualPair};
use rescodec::rd::{self, SweepConfig};
use rescodec::semantic::{
    self, decode_indices, detokenize, encode_indices, pfo_optimize, tokenize, CaptionerClient, IndexMode, PfoConfig,
    TokenSequence, Vocabulary,
};
use rescodec::{Error, Latent, Schedule, ScheduleConfig, ScheduleKind};

use config::Config;
use container::{read_container, write_container, Container};

#[derive(Debug, Parser)]
#[command(name = "rescodec", version, about = "Residual diffusion latent codec toolkit")]
struct Cli {
    /// Seed for every random draw; runs with the same seed are identical.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelKind {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DenoiserKind {
    Gaussian,
    Oracle,
    Mlp,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantize and range-code a latent file (plus an optional caption) into a container.
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        nr: u16,
        #[arg(long)]
        caption: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        eta: u8,
        #[arg(long, default_value = "scaled-linear")]
        schedule: ScheduleKind,
        #[arg(long = "total-steps", default_value_t = 1000)]
        total_steps: u16,
        #[arg(long, value_enum, default_value = "gaussian")]
        model: ModelKind,
        #[arg(long = "index-mode", default_value = "entropy")]
        index_mode: IndexMode,
        /// Word list, one per line (defaults to the built-in list).
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Decode a container and run the reverse process from N_r.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        denoiser: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Overrides the eta stored in the container.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        eta: Option<u8>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Rate x N_r sweep in the Gaussian world; writes every cell as CSV.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// BD-rate of a test curve against an anchor curve (CSV files).
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Projected prompt optimization towards a planted caption.
    PfoDemo {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Semantic residual of two captions. A value starting with `@` names a file.
    Srr {
        #[arg(long)]
        full: String,
        #[arg(long)]
        decoded: String,
        #[arg(long, conflicts_with = "endpoint")]
        mock: bool,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Print the noise schedule as CSV.
    ScheduleDump {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a denoiser parameter blob.
    MakeDenoiser {
        #[arg(long, value_enum)]
        kind: DenoiserKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "prior-mean", default_value_t = 0.0)]
        prior_mean: f64,
        #[arg(long = "prior-var", default_value_t = 1.0)]
        prior_var: f64,
        /// Quantization noise variance; omitted means matched to the N_r endpoint.
        #[arg(long = "quant-var")]
        quant_var: Option<f64>,
        /// Oracle: the clean latent file.
        #[arg(long)]
        z0: Option<PathBuf>,
        /// Oracle: the container the oracle will be decoded with.
        #[arg(long)]
        bitstream: Option<PathBuf>,
        /// Oracle: sampler steps of the later decode.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Mlp: elements per chunk.
        #[arg(long = "latent-dim", default_value_t = 4)]
        latent_dim: usize,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        #[arg(long = "emb-dim", default_value_t = 8)]
        emb_dim: usize,
        /// Mlp: training steps on quantized Gaussian latents (0 leaves it untrained).
        #[arg(long = "train-steps", default_value_t = 0)]
        train_steps: usize,
        #[arg(long = "train-step-size", default_value_t = 1.0)]
        train_quant_step: f64,
        #[arg(long = "train-nr", default_value_t = 100)]
        train_nr: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    File { path: PathBuf, err: std::io::Error, sub: &'static str },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

fn read_file(path: &Path, sub: &'static str) -> CmdResult<Vec<u8>> {
    std::fs::read(path).map_err(|err| Failure::File {
        path: path.to_path_buf(),
        err,
        sub,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    std::fs::write(path, bytes).map_err(|e| Failure::Core(Error::Io(e)))
}

fn usage(sub: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    match cmd.find_subcommand_mut(sub) {
        Some(s) => s.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run(argv: Vec<String>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with(argv: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            let rest: Vec<&str> = rendered.lines().skip(1).collect();
            let _ = writeln!(err, "error[usage]: {first}");
            let _ = writeln!(err, "{}", rest.join("\n").trim());
            return 2;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(Failure::Core(e)) => {
            let _ = writeln!(err, "error[{}]: {}", e.code(), one_line(&e.to_string()));
            1
        }
        Err(Failure::File { path, err: e, sub }) => {
            let _ = writeln!(err, "error[missing-file]: {}: {}", path.display(), one_line(&e.to_string()));
            let _ = writeln!(err, "{}", usage(sub));
            1
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CmdResult {
    let seed = cli.seed;
    match cli.command {
        Command::Encode {
            input,
            step,
            nr,
            caption,
            out: path,
            eta,
            schedule,
            total_steps,
            model,
            index_mode,
            vocab,
        } => {
            let z = Latent::from_bytes(&read_file(&input, "encode")?)?;
            let shape = z
                .shape()
                .iter()
                .map(|&d| u16::try_from(d).map_err(|_| Error::InvalidRange(format!("dimension {d} exceeds u16"))))
                .collect::<Result<Vec<_>, _>>()?;
            let q = quantize(&z, step)?;
            let m = match model {
                ModelKind::Gaussian => EntropyModel::fit_gaussian(q.symbols()),
                ModelKind::Laplace => EntropyModel::fit_laplace(q.symbols()),
            };
            let latent = encode_latent(&q, &m)?;
            let text = match caption {
                Some(c) => {
                    let v = load_vocab(vocab.as_deref(), "encode")?;
                    Some(encode_indices(&tokenize(&c, &v), &v, index_mode)?)
                }
                None => None,
            };
            let c = Container {
                eta: f64::from(eta),
                schedule,
                steps: total_steps,
                n_r: nr,
                shape,
                quant_step: step,
                latent,
                text,
            };
            let bytes = write_container(&c)?;
            write_file(&path, &bytes)?;
            report_rates(out, &c, bytes.len())?;
        }
        Command::Decode {
            input,
            denoiser,
            out: path,
            steps,
            eta,
            vocab,
        } => {
            let c = read_container(&read_file(&input, "decode")?)?;
            let d = AnyDenoiser::from_blob(&read_file(&denoiser, "decode")?)?;
            let vocab = match &c.text {
                Some(_) => Some(load_vocab(vocab.as_deref(), "decode")?),
                None => None,
            };
            let eta = eta.map_or(c.eta, f64::from);
            let z = decode_container(&c, &d, steps, eta, seed.unwrap_or(0))?;
            write_file(&path, &z.to_bytes())?;
            report_rates(out, &c, write_container(&c)?.len())?;
            if let (Some(t), Some(v)) = (&c.text, &vocab) {
                let caption = detokenize(&decode_indices(t, v)?, v);
                writeln!(out, "caption: {caption}").map_err(io)?;
            }
        }
        Command::Sweep { config, out: path, svg } => {
            let cfg = load_config(config.as_deref(), "sweep")?;
            run_sweep(&cfg, seed, &path, svg.as_deref(), out)?;
        }
        Command::Bdrate { anchor, test } => {
            let curve = |p: &Path| -> CmdResult<rd::RDCurve> {
                let pts = rd::read_csv(read_file(p, "bdrate")?.as_slice())?;
                Ok(rd::RDCurve::lower_envelope(pts)?)
            };
            let v = rd::bd_rate(&curve(&anchor)?, &curve(&test)?)?;
            // `+ 0.0` turns a negative zero into zero.
            writeln!(out, "{:.6}", v + 0.0).map_err(io)?;
        }
        Command::PfoDemo { config } => {
            let cfg = load_config(config.as_deref(), "pfo-demo")?;
            run_pfo_demo(&cfg, seed, out)?;
        }
        Command::Srr {
            full,
            decoded,
            mock: _,
            endpoint,
        } => {
            let full = text_arg(&full)?;
            let decoded = text_arg(&decoded)?;
            let client = match endpoint {
                Some(url) => CaptionerClient::http(url),
                None => CaptionerClient::Mock,
            };
            writeln!(out, "{}", client.residual(&full, &decoded)?).map_err(io)?;
        }
        Command::ScheduleDump { config } => {
            let cfg = load_config(config.as_deref(), "schedule-dump")?;
            cfg.check_keys(SCHEDULE_KEYS)?;
            write!(out, "{}", schedule_from(&cfg)?.to_csv()).map_err(io)?;
        }
        Command::MakeDenoiser {
            kind,
            out: path,
            prior_mean,
            prior_var,
            quant_var,
            z0,
            bitstream,
            steps,
            latent_dim,
            hidden,
            emb_dim,
            train_steps,
            train_quant_step,
            train_nr,
        } => {
            let seed = seed.unwrap_or(0);
            let d = match kind {
                DenoiserKind::Gaussian => {
                    let qn = quant_var.map_or(QuantNoise::EndpointMatched, QuantNoise::Fixed);
                    AnyDenoiser::Gaussian(GaussianDenoiser::new(prior_mean, prior_var, qn)?)
                }
                DenoiserKind::Oracle => {
                    let (Some(z0), Some(bs)) = (z0, bitstream) else {
                        return Err(Error::Config("an oracle needs --z0 and --bitstream".into()).into());
                    };
                    let z0 = Latent::from_bytes(&read_file(&z0, "make-denoiser")?)?;
                    let c = read_container(&read_file(&bs, "make-denoiser")?)?;
                    let s = container_schedule(&c)?;
                    let zc = container_zc(&c)?;
                    let pair = ResidualPair::new(z0, zc)?;
                    let n_r = usize::from(c.n_r);
                    let mut noise = GaussianNoise(ChaCha8Rng::seed_from_u64(seed));
                    let list = step_list(n_r, steps)?;
                    AnyDenoiser::Oracle(OracleDenoiser::teacher_forced(&pair, n_r, &list, c.eta, &s, &mut noise)?)
                }
                DenoiserKind::Mlp => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut mlp = Mlp::new(latent_dim, emb_dim, Vec::new(), [hidden, hidden], &mut rng)?;
                    if train_steps > 0 {
                        let s = Schedule::new(ScheduleConfig::default())?;
                        let pairs = rd::gaussian_dataset(256, latent_dim, seed)
                            .into_iter()
                            .map(|z0| {
                                let zc = dequantize(&quantize(&z0, train_quant_step)?)?;
                                ResidualPair::new(z0, zc)
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        let cfg = TrainConfig {
                            steps: train_steps,
                            ..TrainConfig::default()
                        };
                        let losses = mlp.train(&pairs, &s, train_nr, &cfg, &mut rng)?;
                        if let (Some(a), Some(b)) = (losses.first(), losses.last()) {
                            writeln!(out, "train loss {a:.6} -> {b:.6}").map_err(io)?;
                        }
                    }
                    AnyDenoiser::Mlp(mlp)
                }
            };
            write_file(&path, &d.to_blob())?;
            writeln!(out, "wrote {} denoiser to {}", d.kind_name(), path.display()).map_err(io)?;
        }
    }
    Ok(())
}

fn io(e: std::io::Error) -> Failure {
    Failure::Core(Error::Io(e))
}

fn report_rates(out: &mut dyn Write, c: &Container, container_bytes: usize) -> CmdResult {
    let r = c.rates();
    writeln!(
        out,
        "R={} R_c={} R_zc={} container_bits={}",
        r.total(),
        r.r_c,
        r.r_zc,
        8 * container_bytes
    )
    .map_err(io)
}

fn text_arg(v: &str) -> CmdResult<String> {
    match v.strip_prefix('@') {
        Some(p) => {
            let b = read_file(Path::new(p), "srr")?;
            Ok(String::from_utf8_lossy(&b).trim_end().to_string())
        }
        None => Ok(v.to_string()),
    }
}

/// The index coder only needs word positions; the embedding size is nominal.
const CODING_VOCAB_DIM: usize = 2;

fn load_vocab(path: Option<&Path>, sub: &'static str) -> CmdResult<Vocabulary> {
    let text = match path {
        Some(p) => String::from_utf8_lossy(&read_file(p, sub)?).into_owned(),
        None => semantic::DEFAULT_VOCAB.to_string(),
    };
    Ok(Vocabulary::from_text(&text, CODING_VOCAB_DIM, 0)?)
}

fn load_config(path: Option<&Path>, sub: &'static str) -> CmdResult<Config> {
    match path {
        Some(p) => Ok(Config::parse(&String::from_utf8_lossy(&read_file(p, sub)?))?),
        None => Ok(Config::default()),
    }
}

const SCHEDULE_KEYS: &[&str] = &["schedule", "steps", "beta_start", "beta_end"];

fn schedule_from(cfg: &Config) -> CmdResult<Schedule> {
    let d = ScheduleConfig::default();
    Ok(Schedule::new(ScheduleConfig {
        kind: cfg.get("schedule", d.kind)?,
        steps: cfg.get("steps", d.steps)?,
        beta_start: cfg.get("beta_start", d.beta_start)?,
        beta_end: cfg.get("beta_end", d.beta_end)?,
    })?)
}

/// Schedules in containers are identified by kind and T; beta bounds are
/// the defaults.
pub fn container_schedule(c: &Container) -> rescodec::Result<Schedule> {
    Schedule::new(ScheduleConfig {
        kind: c.schedule,
        steps: usize::from(c.steps),
        ..ScheduleConfig::default()
    })
}

pub fn container_zc(c: &Container) -> rescodec::Result<Latent> {
    let (_, symbols) = read_latent_section(&c.latent)?;
    dequantize(&QuantizedLatent::new(c.shape_usize(), symbols, c.quant_step)?)
}

/// Reverse process from the container's N_r; noise is drawn from a ChaCha8
/// stream seeded with `seed`.
pub fn decode_container(
    c: &Container,
    d: &AnyDenoiser,
    steps: usize,
    eta: f64,
    seed: u64,
) -> rescodec::Result<Latent> {
    let s = container_schedule(c)?;
    let zc = container_zc(c)?;
    let n_r = usize::from(c.n_r);
    let mut noise = GaussianNoise(ChaCha8Rng::seed_from_u64(seed));
    sample(d, &zc, n_r, &step_list(n_r, steps)?, eta, &s, &mut noise)
}

const SWEEP_KEYS: &[&str] = &[
    "schedule",
    "steps",
    "beta_start",
    "beta_end",
    "quant_steps",
    "n_r_grid",
    "sampling_steps",
    "eta",
    "seed",
    "count",
    "dim",
    "pixels_per_element",
    "prior_mean",
    "prior_var",
    "denoiser",
];

fn run_sweep(cfg: &Config, seed: Option<u64>, path: &Path, svg: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    cfg.check_keys(SWEEP_KEYS)?;
    let s = schedule_from(cfg)?;
    let d = SweepConfig::default();
    let seed = match seed {
        Some(v) => v,
        None => cfg.get("seed", d.seed)?,
    };
    let sc = SweepConfig {
        quant_steps: cfg.list("quant_steps", d.quant_steps)?,
        n_r_grid: cfg.list("n_r_grid", d.n_r_grid)?,
        sampling_steps: cfg.get("sampling_steps", d.sampling_steps)?,
        eta: cfg.get("eta", d.eta)?,
        seed,
        pixels_per_element: cfg.get("pixels_per_element", d.pixels_per_element)?,
    };
    let count: usize = cfg.get("count", 4096)?;
    let dim: usize = cfg.get("dim", 16)?;
    let den = match cfg.raw("denoiser") {
        Some(p) => AnyDenoiser::from_blob(&read_file(Path::new(p), "sweep")?)?,
        None => AnyDenoiser::Gaussian(GaussianDenoiser::new(
            cfg.get("prior_mean", 0.0)?,
            cfg.get("prior_var", 1.0)?,
            QuantNoise::EndpointMatched,
        )?),
    };
    // The data seed is offset so it never coincides with a cell stream seed.
    let data = rd::gaussian_dataset(count, dim, seed ^ 0x5eed_da7a);
    let surface = rd::sweep(&sc, &den, &s, &data)?;
    let points: Vec<rd::RDPoint> = surface.all_points().copied().collect();
    let mut csv = Vec::new();
    rd::write_csv(&points, &mut csv)?;
    write_file(path, &csv)?;
    if let Some(p) = svg {
        write_file(p, rd::render_svg(&surface)?.as_bytes())?;
    }
    let adaptive = surface.adaptive_curve()?;
    for p in adaptive.points() {
        writeln!(out, "bpp={:.6} N_r*={} distortion={:.6}", p.bpp, p.n_r, p.distortion).map_err(io)?;
    }
    Ok(())
}

const PFO_KEYS: &[&str] = &[
    "vocab",
    "dim",
    "target",
    "iterations",
    "learning_rate",
    "lambda_l",
    "lambda_c",
    "n_r",
    "sampling_steps",
    "seed",
];

/// Starts from random tokens and optimizes towards the embedding of a planted
/// caption. With `lambda_l > 0` an untrained conditioned mlp contributes the
/// denoising term.
fn run_pfo_demo(cfg: &Config, seed: Option<u64>, out: &mut dyn Write) -> CmdResult {
    cfg.check_keys(PFO_KEYS)?;
    let seed = match seed {
        Some(v) => v,
        None => cfg.get("seed", 0u64)?,
    };
    let dim: usize = cfg.get("dim", 32)?;
    let text = match cfg.raw("vocab") {
        Some(p) => String::from_utf8_lossy(&read_file(Path::new(p), "pfo-demo")?).into_owned(),
        None => semantic::DEFAULT_VOCAB.to_string(),
    };
    let v = Vocabulary::from_text(&text, dim, seed)?;
    let target_text = cfg.get("target", "red barn".to_string())?;
    let target_tokens = tokenize(&target_text, &v);
    if target_tokens.is_empty() {
        return Err(Error::Config("empty pfo target".into()).into());
    }
    let target = pooled_mean(&v.embed(&target_tokens), dim);
    let n_r: usize = cfg.get("n_r", 100)?;
    let pc = PfoConfig {
        lambda_l: cfg.get("lambda_l", 0.0)?,
        lambda_c: cfg.get("lambda_c", 1.0)?,
        learning_rate: cfg.get("learning_rate", 0.5)?,
        iterations: cfg.get("iterations", 100)?,
        tokens: target_tokens.len(),
        step_pool: step_list(n_r, cfg.get("sampling_steps", 10)?)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = v.len() as u32;
    let init = TokenSequence::new((0..pc.tokens).map(|_| rng.gen_range(0..total)).collect(), &v)?;
    let s = Schedule::new(ScheduleConfig::default())?;
    let mlp = Mlp::new(4, 8, vec![0.0; dim], [16, 16], &mut rng)?;
    let pairs = rd::gaussian_dataset(8, 4, seed)
        .into_iter()
        .map(|z0| {
            let zc = dequantize(&quantize(&z0, 1.0)?)?;
            ResidualPair::new(z0, zc)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut den = semantic::MlpDenoisingLoss {
        mlp: &mlp,
        schedule: &s,
        pairs: &pairs,
        n_r,
        eta: 0.0,
        rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)),
    };
    let lambda_l = pc.lambda_l;
    let mut denoise = |p: &[f64], n: usize| {
        if lambda_l == 0.0 {
            Ok((0.0, vec![0.0; p.len()]))
        } else {
            den.eval(p, n)
        }
    };
    let mut loss = semantic::combined_loss(pc.lambda_l, &mut denoise, pc.lambda_c, &target, dim);
    let outcome = pfo_optimize(&init, &mut loss, &v, &pc, &mut rng)?;
    let best = outcome.best();
    writeln!(out, "target: {}", detokenize(&target_tokens, &v)).map_err(io)?;
    writeln!(out, "init: {}", detokenize(&init, &v)).map_err(io)?;
    writeln!(out, "first loss: {:.6}", outcome.history[0].loss).map_err(io)?;
    writeln!(out, "best loss: {:.6} at iteration {}", best.loss, best_index(&outcome)).map_err(io)?;
    writeln!(out, "best: {}", detokenize(&best.tokens, &v)).map_err(io)?;
    Ok(())
}

fn best_index(o: &semantic::PfoOutcome) -> usize {
    let best = o.best();
    o.history.iter().position(|r| std::ptr::eq(r, best)).unwrap_or(0)
}

fn pooled_mean(p: &[f64], dim: usize) -> Vec<f64> {
    let rows = (p.len() / dim).max(1) as f64;
    let mut m = vec![0.0; dim];
    for row in p.chunks(dim) {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b / rows;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("rescodec").chain(args.iter().copied()).map(String::from).collect();
        let code = run_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let (code, _, err) = run_capture(&["bdrate", "--frobnicate"]);
        assert_eq!(code, 2);
        assert!(err.starts_with("error[usage]: "), "{err}");
        assert!(err.contains("Usage:"), "{err}");
    }

    #[test]
    fn missing_file_reports_usage() {
        let (code, _, err) = run_capture(&["bdrate", "--anchor", "/nonexistent/a.csv", "--test", "/nonexistent/b.csv"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error[missing-file]: /nonexistent/a.csv"), "{err}");
        assert!(err.contains("Usage: rescodec bdrate"), "{err}");
    }

    #[test]
    fn srr_mock_barn() {
        let (code, out, _) = run_capture(&[
            "srr",
            "--mock",
            "--full",
            "A red barn surrounded by trees, reflected in a pond.",
            "--decoded",
            "red house surrounded by trees",
        ]);
        assert_eq!(code, 0);
        assert_eq!(out, "A barn reflected in a pond.\n");
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let dir = std::env::temp_dir().join(format!("rescodec-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("s.cfg");
        std::fs::write(&p, "schedule = cosine\nbogus = 1\n").unwrap();
        let (code, _, err) = run_capture(&["schedule-dump", "--config", p.to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error[config]: ") && err.contains("unknown key `bogus`"), "{err}");
    }
}
