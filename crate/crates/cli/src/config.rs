//! `key=value` run configuration with dotted sections.
//!
//! A file may use fully dotted keys (`ac.eps = 0.015625`) or `[section]`
//! headers followed by bare keys. Later sources override earlier ones:
//! defaults, then the config file, then `--set` pairs, then dedicated flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pfno_core::allen_cahn::{AcParams, DiskRanges};
use pfno_core::dendrite::{DendriteParams, THIN_INTERFACE_A2};
use pfno_core::training::{IcFamily, LossKind, TrainConfig};

use crate::CliError;

/// Keys written by the manifest that are not settings.
fn is_record_key(key: &str) -> bool {
    key == "command" || key.starts_with("input.") || key.starts_with("output.")
}

/// Raw overrides in application order.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = Self::default();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
            let k = k.trim();
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if is_record_key(&key) {
                continue;
            }
            out.entries.insert(key, v.trim().to_string());
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Applies one `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }
}

/// Typed lookups that remember which keys were consumed.
struct Reader {
    entries: BTreeMap<String, String>,
    used: Vec<String>,
}

impl Reader {
    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.used.push(key.to_string());
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| CliError::Config(format!("{key} = {v:?}: {e}"))),
        }
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.used.push(key.to_string());
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| CliError::Config(format!("{key} = {v:?}: {e}"))),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<&String> = self.entries.keys().filter(|k| !self.used.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!("unknown configuration keys: {unknown:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ac,
    Dendrite,
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ac" => Ok(ModelKind::Ac),
            "dendrite" => Ok(ModelKind::Dendrite),
            _ => Err(format!("unknown model {s:?} (ac, dendrite)")),
        }
    }
}

impl Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Ac => "ac",
            ModelKind::Dendrite => "dendrite",
        })
    }
}

/// Allen-Cahn initial condition / dataset family names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    Disk,
    Perturbed,
    Ood,
    Multi,
    Random,
}

impl FromStr for IcKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "disk" => Ok(IcKind::Disk),
            "perturbed" => Ok(IcKind::Perturbed),
            "ood" => Ok(IcKind::Ood),
            "multi" => Ok(IcKind::Multi),
            "random" => Ok(IcKind::Random),
            _ => Err(format!("unknown initial condition {s:?} (disk, perturbed, ood, multi, random)")),
        }
    }
}

impl Display for IcKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IcKind::Disk => "disk",
            IcKind::Perturbed => "perturbed",
            IcKind::Ood => "ood",
            IcKind::Multi => "multi",
            IcKind::Random => "random",
        })
    }
}

impl IcKind {
    /// Dataset family; `Disk` has no random family.
    pub fn family(self) -> Option<IcFamily> {
        match self {
            IcKind::Disk => None,
            IcKind::Perturbed => Some(IcFamily::PerturbedDisk(DiskRanges::training())),
            IcKind::Ood => Some(IcFamily::PerturbedDisk(DiskRanges::out_of_distribution())),
            IcKind::Multi => Some(IcFamily::MultiDisk),
            IcKind::Random => Some(IcFamily::RandomField),
        }
    }
}

/// Comma-separated list of grain counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountList(pub Vec<usize>);

impl FromStr for CountList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(CountList)
    }
}

impl Display for CountList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub count: usize,
    pub family: IcKind,
    pub targets: bool,
    pub grain_counts: CountList,
    pub arrangements: usize,
    pub states: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub prediction: Option<PathBuf>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub steps: usize,
    pub n: usize,
    pub length: f64,
    pub stride: usize,
    pub plots: bool,
    pub ac: AcParams,
    pub dendrite: DendriteParams,
    pub ic: IcKind,
    pub radius: f64,
    pub grains: usize,
    pub data: DataSettings,
    pub arch: String,
    pub train: TrainConfig,
    pub kappa: f64,
    pub paths: Paths,
}

impl RunConfig {
    /// Resolves `raw` with model-dependent defaults. `forced` pins the model
    /// for commands that only make sense for one of them.
    pub fn resolve(raw: &RawConfig, forced: Option<ModelKind>) -> Result<Self, CliError> {
        let mut r = Reader { entries: raw.entries.clone(), used: Vec::new() };
        let model = match forced {
            Some(m) => {
                let given: ModelKind = r.get("model", m)?;
                if given != m {
                    return Err(CliError::Config(format!("model = {given} is not valid for this command")));
                }
                m
            }
            None => r.get("model", ModelKind::Ac)?,
        };
        let dendrite = model == ModelKind::Dendrite;
        let seed = r.get("run.seed", 0u64)?;
        let steps = r.get("run.steps", if dendrite { 2500 } else { 50 })?;
        let n = r.get("run.n", if dendrite { 200 } else { 128 })?;
        let length = r.get("run.length", if dendrite { 0.5 } else { 1.0 })?;
        let stride = r.get("run.stride", if dendrite { 100 } else { 10 })?;
        let plots = r.get("run.plots", false)?;

        let defaults = AcParams::reference();
        let ac = AcParams {
            eps: r.get("ac.eps", defaults.eps)?,
            beta: r.get("ac.beta", defaults.beta)?,
            dt: r.get("ac.dt", defaults.dt)?,
        };

        let sigma = r.get("dendrite.sigma", 0.05)?;
        let base = DendriteParams::reference(sigma);
        let mut dp = DendriteParams {
            sigma,
            m: r.get("dendrite.m", base.m)?,
            eps: r.get("dendrite.eps", base.eps)?,
            tau: r.get("dendrite.tau", base.tau)?,
            lambda0: base.lambda0,
            d: r.get("dendrite.d", base.d)?,
            k: r.get("dendrite.k", base.k)?,
            kappa: r.get("dendrite.kappa", base.kappa)?,
            beta: r.get("dendrite.beta", base.beta)?,
            dt: r.get("dendrite.dt", base.dt)?,
            alpha_sav: r.get("dendrite.alpha_sav", base.alpha_sav)?,
            c0_sav: r.get("dendrite.c0_sav", base.c0_sav)?,
        };
        dp.lambda0 = r.opt("dendrite.lambda0")?.unwrap_or(dp.d * dp.tau / (THIN_INTERFACE_A2 * dp.eps));

        let ic = r.get("ic.kind", IcKind::Perturbed)?;
        let radius = r.get("ic.radius", 0.3)?;
        let grains = r.get("ic.grains", 1usize)?;

        let data = DataSettings {
            count: r.get("data.count", if dendrite { 0 } else { 180 })?,
            family: r.get("data.family", IcKind::Perturbed)?,
            targets: r.get("data.targets", true)?,
            grain_counts: r.get("data.grain_counts", CountList(vec![1, 2, 3]))?,
            arrangements: r.get("data.arrangements", 4usize)?,
            states: r.get("data.states", 500usize)?,
            stride: r.get("data.stride", 10usize)?,
        };

        let defaults = if dendrite { TrainConfig::dendrite(LossKind::DeepRitz) } else { TrainConfig::allen_cahn(LossKind::DeepRitz) };
        let arch = r.get("train.arch", if dendrite { "prescribed_rdno".to_string() } else { "rdno".to_string() })?;
        let train = TrainConfig {
            loss: r.get("train.loss", defaults.loss)?,
            batch_size: r.get("train.batch_size", defaults.batch_size)?,
            lr: r.get("train.lr", defaults.lr)?,
            max_epochs: r.get("train.max_epochs", defaults.max_epochs)?,
            early_stop_window: r.get("train.early_stop_window", defaults.early_stop_window)?,
            early_stop_threshold: r.get("train.early_stop_threshold", defaults.early_stop_threshold)?,
            seed,
        };
        let kappa = r.get("ivantsov.kappa", -0.3)?;
        let paths = Paths {
            dataset: r.opt("path.dataset")?,
            ckpt: r.opt("path.ckpt")?,
            reference: r.opt("path.ref")?,
            prediction: r.opt("path.pred")?,
        };
        r.finish()?;

        let cfg = Self {
            model,
            seed,
            steps,
            n,
            length,
            stride,
            plots,
            ac,
            dendrite: dp,
            ic,
            radius,
            grains,
            data,
            arch,
            train,
            kappa,
            paths,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.stride == 0 {
            return bad("run.stride must be positive".into());
        }
        if self.grains == 0 {
            return bad("ic.grains must be positive".into());
        }
        if self.ic == IcKind::Disk && !(self.radius > 0.0 && self.radius < 0.5 * self.length) {
            return bad(format!("ic.radius = {} must lie in (0, length/2)", self.radius));
        }
        if self.data.stride == 0 || self.data.states == 0 || self.data.arrangements == 0 {
            return bad("data.stride, data.states and data.arrangements must be positive".into());
        }
        Ok(())
    }

    /// Canonical `key=value` echo; reading it back resolves to `self`.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, val: String| v.push((k.to_string(), val));
        put("model", self.model.to_string());
        put("run.seed", self.seed.to_string());
        put("run.steps", self.steps.to_string());
        put("run.n", self.n.to_string());
        put("run.length", self.length.to_string());
        put("run.stride", self.stride.to_string());
        put("run.plots", self.plots.to_string());
        put("ac.eps", self.ac.eps.to_string());
        put("ac.beta", self.ac.beta.to_string());
        put("ac.dt", self.ac.dt.to_string());
        let d = &self.dendrite;
        put("dendrite.sigma", d.sigma.to_string());
        put("dendrite.m", d.m.to_string());
        put("dendrite.eps", d.eps.to_string());
        put("dendrite.tau", d.tau.to_string());
        put("dendrite.lambda0", d.lambda0.to_string());
        put("dendrite.d", d.d.to_string());
        put("dendrite.k", d.k.to_string());
        put("dendrite.kappa", d.kappa.to_string());
        put("dendrite.beta", d.beta.to_string());
        put("dendrite.dt", d.dt.to_string());
        put("dendrite.alpha_sav", d.alpha_sav.to_string());
        put("dendrite.c0_sav", d.c0_sav.to_string());
        put("ic.kind", self.ic.to_string());
        put("ic.radius", self.radius.to_string());
        put("ic.grains", self.grains.to_string());
        put("data.count", self.data.count.to_string());
        put("data.family", self.data.family.to_string());
        put("data.targets", self.data.targets.to_string());
        put("data.grain_counts", self.data.grain_counts.to_string());
        put("data.arrangements", self.data.arrangements.to_string());
        put("data.states", self.data.states.to_string());
        put("data.stride", self.data.stride.to_string());
        put("train.arch", self.arch.clone());
        put("train.loss", self.train.loss.to_string());
        put("train.batch_size", self.train.batch_size.to_string());
        put("train.lr", self.train.lr.to_string());
        put("train.max_epochs", self.train.max_epochs.to_string());
        put("train.early_stop_window", self.train.early_stop_window.to_string());
        put("train.early_stop_threshold", self.train.early_stop_threshold.to_string());
        put("ivantsov.kappa", self.kappa.to_string());
        let paths = [
            ("path.dataset", &self.paths.dataset),
            ("path.ckpt", &self.paths.ckpt),
            ("path.ref", &self.paths.reference),
            ("path.pred", &self.paths.prediction),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        v
    }
}
