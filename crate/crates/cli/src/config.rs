//! Run configuration: command-line flags layered over an optional flat
//! `key = value` file, resolved to concrete values before anything runs.

use clap::Args;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every subcommand. Unset flags fall back to the config file,
/// then to the defaults in [`RunConfig::resolve`].
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Spatial dimension (1 or 2).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Order of the fractional perimeter or Laplacian.
    #[arg(long)]
    pub s: Option<f64>,
    /// Height of the kernel slice.
    #[arg(long)]
    pub t: Option<f64>,
    /// Half-width of the spatial box.
    #[arg(long = "L", alias = "extent")]
    pub extent: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Ladder slices per octave.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid function CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Built-in test function when no input is given: gaussian, bump or indicator.
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Atom CSV (`n=<dim>` header, rows `x[,y],t,w`).
    #[arg(long)]
    pub measure: Option<PathBuf>,
    /// Boundary set: a generator file, or inline generator text with `;` between lines.
    #[arg(long)]
    pub set: Option<String>,
    /// Half-space box `r0,x0[,y0],t0`; repeat for a union.
    #[arg(long = "box")]
    pub boxes: Vec<String>,
    /// Comma-separated radii.
    #[arg(long)]
    pub radii: Option<String>,
    /// Comma-separated base heights for the bounds sweep.
    #[arg(long)]
    pub heights: Option<String>,
    /// Slices for the extension route of the perimeter (0 skips it).
    #[arg(long)]
    pub slices: Option<usize>,
    /// Random members of the empirical test family.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Everything that determines a run. Serialized into every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
    pub s: f64,
    pub t: f64,
    #[serde(rename = "L")]
    pub extent: f64,
    pub m: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub k: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub input: Option<String>,
    pub function: String,
    pub width: f64,
    pub measure: Option<String>,
    pub set: Option<String>,
    pub boxes: Vec<String>,
    pub radii: Vec<f64>,
    pub heights: Vec<f64>,
    pub slices: usize,
    pub samples: usize,
    pub profile: String,
    pub output: Option<String>,
    pub format: Format,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

const KEYS: &[&str] = &[
    "n", "alpha", "beta", "p", "q", "s", "t", "L", "m", "t_min", "t_max", "k", "max_iterations", "tolerance", "seed",
    "input", "function", "width", "measure", "set", "box", "radii", "heights", "slices", "samples", "profile",
    "output", "format",
];

/// Parses `key = value` lines; `#` starts a comment. `box` may repeat.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, Vec<String>>, ConfigError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(ConfigError(format!("config line {}: unknown key `{k}`", i + 1)));
        }
        let entry = out.entry(k.to_string()).or_default();
        if k != "box" && !entry.is_empty() {
            return Err(ConfigError(format!("config line {}: `{k}` given twice", i + 1)));
        }
        entry.push(v.trim().to_string());
    }
    Ok(out)
}

fn list(text: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| ConfigError(format!("`{key}`: {v}: {e}"))))
        .collect()
}

struct Layer<'a> {
    file: &'a BTreeMap<String, Vec<String>>,
}

impl Layer<'_> {
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key).and_then(|v| v.first()) {
            Some(s) => s.parse::<T>().map_err(|e| ConfigError(format!("`{key}`: {s}: {e}"))),
            None => Ok(default),
        }
    }

    fn opt(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.file.get(key).and_then(|v| v.first().cloned()))
    }
}

impl RunConfig {
    pub fn resolve(subcommand: &str, flags: Flags) -> Result<Self, ConfigError> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("config file {}: {e}", path.display())))?;
                parse_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let l = Layer { file: &file };
        let path = |p: Option<PathBuf>| p.map(|p| p.display().to_string());
        let n = l.get(flags.n, "n", 1)?;
        let extent = l.get(flags.extent, "L", 4.0)?;
        let m = l.get(flags.m, "m", 64)?;
        if !(n == 1 || n == 2) {
            return Err(ConfigError(format!("`n` must be 1 or 2, got {n}")));
        }
        if !(extent > 0.0 && extent.is_finite()) || m < 4 {
            return Err(ConfigError("grid needs L > 0 and m ≥ 4".into()));
        }
        let h = 2.0 * extent / m as f64;
        let format = match flags.format {
            Some(f) => f,
            None => match l.opt(None, "format").as_deref() {
                None | Some("json") => Format::Json,
                Some("csv") => Format::Csv,
                Some(other) => return Err(ConfigError(format!("`format`: {other} (json|csv)"))),
            },
        };
        let boxes = if flags.boxes.is_empty() {
            file.get("box").cloned().unwrap_or_default()
        } else {
            flags.boxes
        };
        let radii = l.opt(flags.radii, "radii").unwrap_or_else(|| "0.5,1,2".into());
        let heights = l.opt(flags.heights, "heights").unwrap_or_else(|| "0.25,0.5,1".into());
        let cfg = RunConfig {
            subcommand: subcommand.to_string(),
            n,
            alpha: l.get(flags.alpha, "alpha", 1.0)?,
            beta: l.get(flags.beta, "beta", 0.0)?,
            p: l.get(flags.p, "p", 2.0)?,
            q: l.get(flags.q, "q", 2.0)?,
            s: l.get(flags.s, "s", 0.5)?,
            t: l.get(flags.t, "t", 1.0)?,
            extent,
            m,
            t_min: l.get(flags.t_min, "t_min", h / 2.0)?,
            t_max: l.get(flags.t_max, "t_max", 2.0 * extent)?,
            k: l.get(flags.k, "k", 8)?,
            max_iterations: l.get(flags.max_iterations, "max_iterations", 6000)?,
            tolerance: l.get(flags.tolerance, "tolerance", 1e-5)?,
            seed: l.get(flags.seed, "seed", 0)?,
            input: path(flags.input).or_else(|| l.opt(None, "input")),
            function: l.opt(flags.function, "function").unwrap_or_else(|| "gaussian".into()),
            width: l.get(flags.width, "width", 1.0)?,
            measure: path(flags.measure).or_else(|| l.opt(None, "measure")),
            set: l.opt(flags.set, "set"),
            boxes,
            radii: list(&radii, "radii")?,
            heights: list(&heights, "heights")?,
            slices: l.get(flags.slices, "slices", 0)?,
            samples: l.get(flags.samples, "samples", 64)?,
            profile: l.opt(flags.profile, "profile").unwrap_or_else(|| "quick".into()),
            output: path(flags.output).or_else(|| l.opt(None, "output")),
            format,
        };
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_layer_and_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nalpha = 0.5\nm = 128\nbox = 1,0,0\nbox = 0.5,1.5,0.5\n").unwrap();
        let flags = Flags {
            config: Some(path),
            m: Some(32),
            ..Flags::default()
        };
        let c = RunConfig::resolve("capacity", flags).unwrap();
        assert_eq!((c.alpha, c.m), (0.5, 32));
        assert_eq!(c.boxes.len(), 2);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(parse_file("gamma = 1").is_err());
        assert!(parse_file("p = 1\np = 2").is_err());
        assert!(parse_file("no equals sign").is_err());
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = RunConfig::resolve("kernel", Flags::default()).unwrap();
        let b = RunConfig::resolve(
            "kernel",
            Flags {
                seed: Some(1),
                ..Flags::default()
            },
        )
        .unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
