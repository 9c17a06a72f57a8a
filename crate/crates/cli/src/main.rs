//! `arsr` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or environment, 3 malformed file,
//! 4 contract/shape/data violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arsr::io::dataset::{DatasetPrep, ENCODER_ENV};
use arsr::io::picture::{read_png, write_png, Matrix};
use arsr::io::weights::{read_manifest, read_model, write_model};
use arsr::io::y4m::{Y4m, Y4mFrame};
use arsr::metrics::{psnr_frame, ssim};
use arsr::quant::{quantize_model, DEFAULT_BITS};
use arsr::train::{fit, LossKind, LossSpec, TrainConfig};
use arsr::{
    plan, upscale_frame, ChromaMethod, Error, Form, Frame32, ModelConfig, NetWeights, Network32, Resolution, Result,
    Tensor32,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "arsr", version, about = "Artifact reduction and super resolution for video frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Psnr,
    Ssim,
}

#[derive(Subcommand)]
enum Command {
    /// Upscale a PNG image or a Y4M stream.
    Upscale {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Model file; repeat to offer several scale factors.
        #[arg(long, required = true)]
        weights: Vec<PathBuf>,
        /// Output size as WxH (default: the first model's factor).
        #[arg(long)]
        target_res: Option<Resolution>,
        #[arg(long, default_value = "bilinear")]
        chroma: ChromaMethod,
        #[arg(long, default_value = "bt709")]
        matrix: Matrix,
    },
    /// Fold expanded weights into single convolutions.
    Collapse {
        #[arg(long)]
        in_weights: PathBuf,
        #[arg(long)]
        out_weights: PathBuf,
    },
    /// Post-training quantization of collapsed weights.
    Quantize {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BITS)]
        bits: u32,
        /// Restrict scales to powers of two.
        #[arg(long)]
        pow2: bool,
        /// Directory of PNG images used to calibrate activation ranges.
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bt709")]
        matrix: Matrix,
    },
    /// Train a small model on LR/HR PNG pairs.
    TrainToy {
        /// Directory with `lr/` and `hr/` subfolders of same-named PNGs.
        #[arg(long)]
        data: PathBuf,
        /// TOML file with optional `[model]` and `[train]` tables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "mae")]
        loss: LossKind,
        #[arg(long, default_value_t = 1.0)]
        huber_delta: f64,
        #[arg(long)]
        out_weights: PathBuf,
        /// CSV of per-epoch mean loss.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value = "bt709")]
        matrix: Matrix,
    },
    /// Compare frames by PSNR or SSIM.
    ///
    /// Inputs are PNG files, Y4M streams, or directories of PNGs paired by
    /// sorted name. PSNR pools all planes; SSIM uses luma. For VMAF run an
    /// external tool on the Y4M output, e.g.
    /// `ffmpeg -i test.y4m -i ref.y4m -lavfi libvmaf -f null -`.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "psnr")]
        metric: Metric,
        #[arg(long, default_value = "bt709")]
        matrix: Matrix,
    },
    /// Print (or run) the encoder commands that build LR/HR training pairs.
    DatasetPrep {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Source size as WxH, to name the LR size exactly.
        #[arg(long)]
        source_res: Option<Resolution>,
        #[arg(long, default_value_t = 50)]
        bitrate: u32,
        #[arg(long, default_value_t = 4)]
        divisor: usize,
        #[arg(long, default_value = "libx265")]
        codec: String,
        /// Encoder binary; defaults to $ARSR_ENCODER, then `ffmpeg`.
        #[arg(long)]
        encoder: Option<String>,
        #[arg(long)]
        execute: bool,
    },
    /// Show a model file's manifest and parameter count.
    Info { weights: PathBuf },
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ToyConfig {
    model: ModelConfig,
    train: TrainConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Upscale { input, out, weights, target_res, chroma, matrix } => {
            upscale(&input, &out, &weights, target_res, chroma, matrix)
        }
        Command::Collapse { in_weights, out_weights } => {
            let net: Network32 = read_model(&in_weights)?;
            let NetWeights::Float(w) = &net.weights else {
                return Err(Error::Contract("quantized models are already collapsed".into()));
            };
            if w.form == Form::Collapsed {
                return Err(Error::Contract(format!("{} is already collapsed", in_weights.display())));
            }
            write_model(&out_weights, &Network32::float(net.cfg.clone(), w.collapse(&net.cfg)?)?)
        }
        Command::Quantize { weights, bits, pow2, calib, out, matrix } => {
            let net: Network32 = read_model(&weights)?;
            let NetWeights::Float(w) = &net.weights else {
                return Err(Error::Contract(format!("{} is already quantized", weights.display())));
            };
            let inputs: Vec<Tensor32> =
                png_files(&calib)?.iter().map(|p| Ok(read_png(p, matrix)?.frame.y)).collect::<Result<_>>()?;
            let model = quantize_model(w, &net.cfg, bits, pow2, &inputs)?;
            write_model(&out, &Network32::quantized(net.cfg.clone(), model)?)
        }
        Command::TrainToy { data, config, loss, huber_delta, out_weights, history, matrix } => {
            let toy: ToyConfig = match config {
                Some(p) => toml::from_str(&fs::read_to_string(&p)?)
                    .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?,
                None => ToyConfig::default(),
            };
            let spec = match loss {
                LossKind::Huber => LossSpec::huber(huber_delta)?,
                kind => LossSpec::new(kind),
            };
            let pairs = training_pairs(&data, matrix)?;
            let outcome = fit(&toy.model, &toy.train, &spec, &pairs)?;
            write_model(&out_weights, &Network32::float(toy.model, outcome.weights)?)?;
            if let Some(p) = history {
                let mut csv = String::from("epoch,mean_loss\n");
                for (i, l) in outcome.history.iter().enumerate() {
                    csv += &format!("{},{l}\n", i + 1);
                }
                fs::write(p, csv)?;
            }
            if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
                println!("loss {first:.6} -> {last:.6} over {} epochs", outcome.history.len());
            }
            Ok(())
        }
        Command::Eval { reference, test, metric, matrix } => {
            let (a, b) = (load_frames(&reference, matrix)?, load_frames(&test, matrix)?);
            if a.len() != b.len() {
                return Err(Error::Shape(format!("{} reference frames vs {} test frames", a.len(), b.len())));
            }
            let (name, unit) = match metric {
                Metric::Psnr => ("psnr", " dB"),
                Metric::Ssim => ("ssim", ""),
            };
            let mut scores = Vec::with_capacity(a.len());
            for (i, (fa, fb)) in a.iter().zip(&b).enumerate() {
                let s = match metric {
                    Metric::Psnr => psnr_frame(fa, fb)?,
                    Metric::Ssim => ssim(&fa.y, &fb.y)?,
                };
                println!("frame {i}: {name} {}{unit}", fmt_score(s));
                scores.push(s);
            }
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            println!("mean: {name} {}{unit}", fmt_score(mean));
            Ok(())
        }
        Command::DatasetPrep { source, out_dir, source_res, bitrate, divisor, codec, encoder, execute } => {
            let mut prep = DatasetPrep::new(source, out_dir);
            prep.source_res = source_res;
            prep.bitrate_kbps = bitrate;
            prep.scale_divisor = divisor;
            prep.codec = codec;
            if let Some(e) = encoder {
                prep.encoder = e;
            }
            for c in prep.commands()? {
                println!("{c}");
            }
            if execute {
                prep.execute()?;
            } else {
                eprintln!("(not executed; pass --execute, encoder from --encoder or ${ENCODER_ENV})");
            }
            Ok(())
        }
        Command::Info { weights } => {
            print!("{}", read_manifest(&weights)?);
            let net: Network32 = read_model(&weights)?;
            let (form, count) = match &net.weights {
                NetWeights::Float(w) => (w.form.to_string(), w.param_count()),
                NetWeights::Quantized(q) => (format!("collapsed, {}-bit", q.bits()), q.weights.param_count()),
            };
            println!("parameters: {} ({form})", group_thousands(count));
            Ok(())
        }
    }
}

fn fmt_score(s: f64) -> String {
    if s.is_infinite() {
        "inf".into()
    } else {
        format!("{s:.4}")
    }
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn extension(p: &Path) -> String {
    p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| extension(p) == "png")
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG files in {}", dir.display())));
    }
    Ok(files)
}

fn load_frames(path: &Path, matrix: Matrix) -> Result<Vec<Frame32>> {
    if path.is_dir() {
        return png_files(path)?.iter().map(|p| Ok(read_png(p, matrix)?.frame)).collect();
    }
    match extension(path).as_str() {
        "y4m" => {
            let stream = Y4m::read(path)?;
            (0..stream.frames.len()).map(|i| stream.decode(i)).collect()
        }
        _ => Ok(vec![read_png(path, matrix)?.frame]),
    }
}

fn training_pairs(data: &Path, matrix: Matrix) -> Result<Vec<(Tensor32, Tensor32)>> {
    png_files(&data.join("lr"))?
        .iter()
        .map(|lr| {
            let hr = data.join("hr").join(lr.file_name().expect("listed file has a name"));
            if !hr.exists() {
                return Err(Error::Data(format!("no HR image for {}", lr.display())));
            }
            Ok((read_png(lr, matrix)?.frame.y, read_png(&hr, matrix)?.frame.y))
        })
        .collect()
}

fn upscale(
    input: &Path,
    out: &Path,
    weights: &[PathBuf],
    target: Option<Resolution>,
    chroma: ChromaMethod,
    matrix: Matrix,
) -> Result<()> {
    let nets: Vec<Network32> = weights.iter().map(read_model).collect::<Result<_>>()?;
    let for_factor = |k: usize| -> Result<Option<&Network32>> {
        if k == 1 {
            return Ok(None);
        }
        nets.iter().find(|n| n.scale() == k).map(Some).ok_or_else(|| {
            let have: Vec<String> = nets.iter().map(|n| format!("x{}", n.scale())).collect();
            Error::Contract(format!("target needs a x{k} model; given {}", have.join(", ")))
        })
    };
    let target_for = |res: Resolution| target.unwrap_or_else(|| res.scaled(nets[0].scale()));

    if extension(input) == "y4m" {
        let stream = Y4m::read(input)?;
        let res = stream.resolution();
        let p = plan(res, target_for(res))?;
        let net = for_factor(p.net_factor)?;
        let frames = (0..stream.frames.len())
            .map(|i| {
                let up = upscale_frame(&stream.decode::<f32>(i)?, &p, net, chroma)?;
                Ok(Y4mFrame { params: stream.frames[i].params.clone(), ..Y4m::encode(&up) })
            })
            .collect::<Result<_>>()?;
        let header = stream.header.resized(p.output(res));
        return Y4m { header, frames }.write(out);
    }
    let pic = read_png::<f32>(input, matrix)?;
    let res = pic.frame.resolution();
    let p = plan(res, target_for(res))?;
    let up = upscale_frame(&pic.frame, &p, for_factor(p.net_factor)?, chroma)?;
    write_png(out, &up, pic.grayscale, matrix)
}
