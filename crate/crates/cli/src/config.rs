//! Flag/config-file resolution.
//!
//! Every option can come from the command line or from a flat `key=value`
//! config file whose keys mirror the long flag names; flags win. The
//! resolved configuration has a canonical text form whose SHA-256 digest is
//! recorded in the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

use spectra_kde::{BandwidthRule, DiscreteMeasure, EntryDistribution, PopulationSpec};

/// Shared command-line options. All optional so a config file can fill them.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Entry distribution: exp | bion.
    #[arg(long)]
    pub ensemble: Option<String>,
    /// Population matrix: identity | diagonal:<loc>=<mass>,... | wishart:<ens>:<ratio>.
    #[arg(long)]
    pub population: Option<String>,
    /// Matrix dimension p.
    #[arg(long)]
    pub p: Option<usize>,
    /// Sample size n.
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte-Carlo replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Bandwidth rule: default | fixed:<h> | power:<coef>:<exp>.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation grid min:max:points.
    #[arg(long)]
    pub grid: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Noise power for the SIR functional.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Received power of user 1.
    #[arg(long)]
    pub p1: Option<f64>,
    /// Imaginary part of the recovery contour.
    #[arg(long)]
    pub contour_im: Option<f64>,
    /// Comma-separated sample sizes for rate checks.
    #[arg(long)]
    pub n_values: Option<String>,
}

/// A parsed key=value config file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {} is not key=value: {line}", lineno + 1))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// The fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub ensemble: EntryDistribution,
    pub ensemble_name: String,
    pub population: PopulationSpec,
    pub population_name: String,
    pub p: usize,
    pub n: usize,
    pub replicates: usize,
    pub bandwidth: BandwidthRule,
    pub bandwidth_name: String,
    pub seed: u64,
    pub grid: Option<(f64, f64, usize)>,
    pub out: PathBuf,
    pub sigma2: Option<f64>,
    pub p1: f64,
    pub contour_im: f64,
    pub n_values: Vec<usize>,
}

fn pick<T, F>(flag: Option<T>, file: Option<&str>, key: &str, parse: F) -> Result<Option<T>>
where
    F: Fn(&str) -> Result<T>,
{
    if let Some(v) = flag {
        return Ok(Some(v));
    }
    match file {
        Some(raw) => parse(raw).map(Some).with_context(|| format!("config key {key}")),
        None => Ok(None),
    }
}

pub fn parse_ensemble(raw: &str) -> Result<EntryDistribution> {
    match raw {
        "exp" => Ok(EntryDistribution::ShiftedExponential),
        "bion" => Ok(EntryDistribution::Rademacher),
        other => bail!("ensemble must be exp or bion, got {other}"),
    }
}

pub fn parse_population(raw: &str, p: usize) -> Result<PopulationSpec> {
    if raw == "identity" {
        return Ok(PopulationSpec::Identity { p });
    }
    if let Some(atoms) = raw.strip_prefix("diagonal:") {
        let mut parsed = Vec::new();
        for atom in atoms.split(',') {
            let (loc, mass) = atom
                .split_once('=')
                .ok_or_else(|| anyhow!("diagonal atom must be <loc>=<mass>, got {atom}"))?;
            parsed.push((
                loc.trim().parse::<f64>().with_context(|| format!("atom location {loc}"))?,
                mass.trim().parse::<f64>().with_context(|| format!("atom mass {mass}"))?,
            ));
        }
        let measure = DiscreteMeasure::new(parsed)?;
        return Ok(PopulationSpec::Diagonal { measure, p });
    }
    if let Some(rest) = raw.strip_prefix("wishart:") {
        let (ens, ratio) = rest
            .split_once(':')
            .ok_or_else(|| anyhow!("wishart population must be wishart:<ens>:<ratio>"))?;
        let entry = parse_ensemble(ens)?;
        let ratio: f64 = ratio.parse().with_context(|| format!("wishart ratio {ratio}"))?;
        if !(ratio >= 1.0) {
            bail!("wishart ratio must be >= 1, got {ratio}");
        }
        let n2 = (ratio * p as f64).round() as usize;
        return Ok(PopulationSpec::Wishart { entry, p, n2 });
    }
    bail!("population must be identity, diagonal:<loc>=<mass>,... or wishart:<ens>:<ratio>, got {raw}")
}

pub fn parse_bandwidth(raw: &str) -> Result<BandwidthRule> {
    if raw == "default" {
        return Ok(BandwidthRule::PaperDefault);
    }
    if let Some(h) = raw.strip_prefix("fixed:") {
        return Ok(BandwidthRule::Fixed(h.parse().with_context(|| format!("bandwidth {h}"))?));
    }
    if let Some(rest) = raw.strip_prefix("power:") {
        let (coef, exp) = rest
            .split_once(':')
            .ok_or_else(|| anyhow!("power bandwidth must be power:<coef>:<exp>"))?;
        return Ok(BandwidthRule::Power {
            coef: coef.parse().with_context(|| format!("bandwidth coefficient {coef}"))?,
            exponent: exp.parse().with_context(|| format!("bandwidth exponent {exp}"))?,
        });
    }
    bail!("bandwidth must be default, fixed:<h> or power:<coef>:<exp>, got {raw}")
}

pub fn parse_grid(raw: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 3 {
        bail!("grid must be min:max:points, got {raw}");
    }
    let min: f64 = parts[0].parse().with_context(|| format!("grid min {}", parts[0]))?;
    let max: f64 = parts[1].parse().with_context(|| format!("grid max {}", parts[1]))?;
    let points: usize = parts[2].parse().with_context(|| format!("grid points {}", parts[2]))?;
    if !(min < max) || points < 2 {
        bail!("grid needs min < max and points >= 2, got {raw}");
    }
    Ok((min, max, points))
}

fn parse_n_values(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("n value {s}")))
        .collect()
}

/// Merge flags over the config file and apply defaults.
pub fn resolve(args: &CommonArgs) -> Result<Resolved> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };

    let p = pick(args.p, file.get("p"), "p", |s| Ok(s.parse::<usize>()?))?
        .ok_or_else(|| anyhow!("p required"))?;
    let n = pick(args.n, file.get("n"), "n", |s| Ok(s.parse::<usize>()?))?
        .ok_or_else(|| anyhow!("n required"))?;

    let ensemble_name = args
        .ensemble
        .clone()
        .or_else(|| file.get("ensemble").map(str::to_string))
        .unwrap_or_else(|| "exp".to_string());
    let ensemble = parse_ensemble(&ensemble_name)?;

    let population_name = args
        .population
        .clone()
        .or_else(|| file.get("population").map(str::to_string))
        .unwrap_or_else(|| "identity".to_string());
    let population = parse_population(&population_name, p)?;

    let bandwidth_name = args
        .bandwidth
        .clone()
        .or_else(|| file.get("bandwidth").map(str::to_string))
        .unwrap_or_else(|| "default".to_string());
    let bandwidth = parse_bandwidth(&bandwidth_name)?;

    let replicates =
        pick(args.replicates, file.get("replicates"), "replicates", |s| Ok(s.parse()?))?
            .unwrap_or(50);
    let seed = pick(args.seed, file.get("seed"), "seed", |s| Ok(s.parse()?))?.unwrap_or(1);
    let grid = pick(args.grid.clone(), file.get("grid"), "grid", |s| Ok(s.to_string()))?
        .map(|raw| parse_grid(&raw))
        .transpose()?;
    let out = args
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let sigma2 = pick(args.sigma2, file.get("sigma2"), "sigma2", |s| Ok(s.parse()?))?;
    let p1 = pick(args.p1, file.get("p1"), "p1", |s| Ok(s.parse()?))?.unwrap_or(1.0);
    let contour_im =
        pick(args.contour_im, file.get("contour-im"), "contour-im", |s| Ok(s.parse()?))?
            .unwrap_or(0.5);
    let n_values =
        pick(args.n_values.clone(), file.get("n-values"), "n-values", |s| Ok(s.to_string()))?
            .map(|raw| parse_n_values(&raw))
            .transpose()?
            .unwrap_or_default();

    Ok(Resolved {
        ensemble,
        ensemble_name,
        population,
        population_name,
        p,
        n,
        replicates,
        bandwidth,
        bandwidth_name,
        seed,
        grid,
        out,
        sigma2,
        p1,
        contour_im,
        n_values,
    })
}

impl Resolved {
    /// Canonical `key=value` lines of the resolved configuration; the digest
    /// is the SHA-256 of this text.
    pub fn canonical_lines(&self, command: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "bandwidth={}", self.bandwidth_name);
        let _ = writeln!(s, "command={command}");
        let _ = writeln!(s, "contour-im={}", self.contour_im);
        let _ = writeln!(s, "ensemble={}", self.ensemble_name);
        let _ = writeln!(
            s,
            "grid={}",
            match self.grid {
                Some((min, max, points)) => format!("{min}:{max}:{points}"),
                None => "auto".to_string(),
            }
        );
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(
            s,
            "n-values={}",
            self.n_values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(s, "p={}", self.p);
        let _ = writeln!(s, "p1={}", self.p1);
        let _ = writeln!(s, "population={}", self.population_name);
        let _ = writeln!(s, "replicates={}", self.replicates);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(
            s,
            "sigma2={}",
            self.sigma2.map(|v| v.to_string()).unwrap_or_else(|| "none".to_string())
        );
        s
    }

    pub fn digest(&self, command: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_lines(command).as_bytes());
        let hex: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }
}
