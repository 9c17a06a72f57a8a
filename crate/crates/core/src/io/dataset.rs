//! LR/HR training-pair extraction via an external encoder.
//!
//! The LR clip is the source downscaled by an integer divisor and compressed
//! with H.265 at a low bitrate; LR frames come from that clip and HR frames
//! from the untouched source. By default only the command lines are produced.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{contract_err, Error, Result};
use crate::pipeline::Resolution;

/// Environment variable naming the encoder binary (default `ffmpeg`).
pub const ENCODER_ENV: &str = "ARSR_ENCODER";
pub const DEFAULT_BITRATE_KBPS: u32 = 50;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommandLine {
    pub program: String,
    pub args: Vec<String>,
}

impl fmt::Display for CommandLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let quote = |s: &str| {
            if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_./:=%,+".contains(c)) {
                s.to_string()
            } else {
                format!("'{}'", s.replace('\'', r"'\''"))
            }
        };
        write!(f, "{}", quote(&self.program))?;
        for a in &self.args {
            write!(f, " {}", quote(a))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DatasetPrep {
    pub source: PathBuf,
    /// Source resolution, when known; lets the scale filter name exact sizes.
    pub source_res: Option<Resolution>,
    pub bitrate_kbps: u32,
    pub scale_divisor: usize,
    pub codec: String,
    pub out_dir: PathBuf,
    pub encoder: String,
}

impl DatasetPrep {
    pub fn new(source: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            source: source.into(),
            source_res: None,
            bitrate_kbps: DEFAULT_BITRATE_KBPS,
            scale_divisor: 4,
            codec: "libx265".into(),
            out_dir: out_dir.into(),
            encoder: std::env::var(ENCODER_ENV).unwrap_or_else(|_| "ffmpeg".into()),
        }
    }

    pub fn lr_clip(&self) -> PathBuf {
        self.out_dir.join("lr.mp4")
    }

    fn scale_arg(&self) -> Result<String> {
        let d = self.scale_divisor;
        if d == 0 {
            return Err(contract_err!("scale divisor must be >= 1"));
        }
        Ok(match self.source_res {
            Some(r) => format!("scale={}:{}:flags=bicubic", r.width / d, r.height / d),
            None => format!("scale=iw/{d}:ih/{d}:flags=bicubic"),
        })
    }

    /// The three encoder invocations: compress the downscaled clip, dump its
    /// frames, dump the source frames.
    pub fn commands(&self) -> Result<Vec<CommandLine>> {
        let path = |p: &Path| p.to_string_lossy().into_owned();
        let cmd = |args: Vec<String>| CommandLine { program: self.encoder.clone(), args };
        let rate = format!("{}k", self.bitrate_kbps);
        let src = path(&self.source);
        let lr = path(&self.lr_clip());
        Ok(vec![
            cmd(vec![
                "-y".into(),
                "-i".into(),
                src.clone(),
                "-vf".into(),
                self.scale_arg()?,
                "-c:v".into(),
                self.codec.clone(),
                "-b:v".into(),
                rate.clone(),
                "-maxrate".into(),
                rate,
                "-bufsize".into(),
                format!("{}k", 2 * self.bitrate_kbps),
                lr.clone(),
            ]),
            cmd(vec!["-y".into(), "-i".into(), lr, path(&self.out_dir.join("lr").join("%06d.png"))]),
            cmd(vec!["-y".into(), "-i".into(), src, path(&self.out_dir.join("hr").join("%06d.png"))]),
        ])
    }

    /// Runs [`commands`](Self::commands), creating the output folders first.
    pub fn execute(&self) -> Result<()> {
        let commands = self.commands()?;
        for sub in ["lr", "hr"] {
            std::fs::create_dir_all(self.out_dir.join(sub))?;
        }
        for c in commands {
            let status = Command::new(&c.program).args(&c.args).status().map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => {
                    Error::Environment(format!("encoder binary `{}` not found (set {ENCODER_ENV})", c.program))
                }
                _ => Error::Io(e),
            })?;
            if !status.success() {
                return Err(Error::Environment(format!("`{c}` exited with {status}")));
            }
        }
        Ok(())
    }
}
