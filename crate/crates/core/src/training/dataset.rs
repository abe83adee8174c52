use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::TrainError;
use crate::allen_cahn::{
    ac_split_step, ic_multi_disk, ic_perturbed_disk, ic_random_field, periodic_delta, sample_disk_spec, AcParams,
    DiskRanges,
};
use crate::dendrite::{ic_dendrite, sav_step, DendriteParams, SavState, SEED_RADIUS_EPS};
use crate::field::{snapshot_read, snapshot_write, write_meta};
use crate::metrics::Physics;
use crate::{Field2D, Grid2D};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `u` for Allen-Cahn, `φ` for the dendrite model.
    pub phase: Field2D,
    pub temperature: Option<Field2D>,
    /// Next-step phase field, for the data-driven loss.
    pub target: Option<Field2D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub physics: Physics,
    pub samples: Vec<Sample>,
    pub provenance: BTreeMap<String, String>,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Dataset {
    pub fn grid(&self) -> Option<Grid2D> {
        self.samples.first().map(|s| *s.phase.grid())
    }

    pub fn has_targets(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.target.is_some())
    }

    /// Shared grid, consistent channels, temperature present iff dendrite.
    pub fn validate(&self) -> Result<(), TrainError> {
        let grid = self.grid().ok_or_else(|| TrainError::InvalidDataset("no samples".into()))?;
        let with_target = self.samples[0].target.is_some();
        let dendrite = matches!(self.physics, Physics::Dendrite(_));
        for (i, s) in self.samples.iter().enumerate() {
            let fields = std::iter::once(&s.phase).chain(s.temperature.as_ref()).chain(s.target.as_ref());
            if fields.clone().any(|f| *f.grid() != grid) {
                return Err(TrainError::InvalidDataset(format!("sample {i} is on a different grid")));
            }
            if s.temperature.is_some() != dendrite {
                return Err(TrainError::InvalidDataset(format!("sample {i}: temperature channel mismatch")));
            }
            if s.target.is_some() != with_target {
                return Err(TrainError::InvalidDataset(format!("sample {i}: targets present on some samples only")));
            }
        }
        Ok(())
    }

    /// SHA-256 over all sample values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            for f in std::iter::once(&s.phase).chain(s.temperature.as_ref()).chain(s.target.as_ref()) {
                for v in f.values() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex(&h.finalize())
    }

    /// One snapshot per sample plus `dataset.txt` listing physics, provenance,
    /// and every snapshot path with its digest.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), TrainError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        for (k, v) in physics_entries(&self.physics) {
            manifest.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in &self.provenance {
            manifest.push_str(&format!("provenance.{k}={v}\n"));
        }
        manifest.push_str(&format!("targets={}\n", self.has_targets()));
        manifest.push_str(&format!("digest={}\n", self.digest()));
        for (i, s) in self.samples.iter().enumerate() {
            let name = format!("sample_{i:05}.bin");
            let mut channels = vec![s.phase.clone()];
            channels.extend(s.temperature.clone());
            channels.extend(s.target.clone());
            let path = dir.join(&name);
            snapshot_write(&channels, &path)?;
            write_meta(&path, &[("length", s.phase.grid().length().to_string())])?;
            let digest = hex(&Sha256::digest(fs::read(&path)?));
            manifest.push_str(&format!("sample={name} {digest}\n"));
        }
        fs::write(dir.join("dataset.txt"), manifest)?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Dataset, TrainError> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("dataset.txt"))?;
        let mut kv = BTreeMap::new();
        let mut files = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| TrainError::InvalidDataset(format!("bad manifest line {line:?}")))?;
            if k == "sample" {
                let (name, digest) = v
                    .split_once(' ')
                    .ok_or_else(|| TrainError::InvalidDataset(format!("bad sample line {line:?}")))?;
                files.push((name.to_string(), digest.to_string()));
            } else {
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let physics = physics_from_entries(&kv)?;
        let targets = kv.get("targets").map(|v| v == "true").unwrap_or(false);
        let dendrite = matches!(physics, Physics::Dendrite(_));
        let expected = 1 + dendrite as usize + targets as usize;
        let mut samples = Vec::with_capacity(files.len());
        for (name, digest) in files {
            let path = dir.join(&name);
            if hex(&Sha256::digest(fs::read(&path)?)) != digest {
                return Err(TrainError::InvalidDataset(format!("{name}: digest mismatch")));
            }
            let mut ch = snapshot_read(&path)?.into_iter();
            if ch.len() != expected {
                return Err(TrainError::InvalidDataset(format!("{name}: {} channels, expected {expected}", ch.len())));
            }
            let phase = ch.next().expect("phase channel");
            let temperature = if dendrite { ch.next() } else { None };
            let target = if targets { ch.next() } else { None };
            samples.push(Sample { phase, temperature, target });
        }
        let provenance = kv
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("provenance.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let ds = Dataset { physics, samples, provenance };
        ds.validate()?;
        Ok(ds)
    }
}

/// Key/value form of the physical parameters, as used in manifests.
pub fn physics_entries(physics: &Physics) -> Vec<(&'static str, String)> {
    match physics {
        Physics::AllenCahn(p) => vec![
            ("model", "ac".into()),
            ("eps", p.eps.to_string()),
            ("beta", p.beta.to_string()),
            ("dt", p.dt.to_string()),
        ],
        Physics::Dendrite(p) => vec![
            ("model", "dendrite".into()),
            ("sigma", p.sigma.to_string()),
            ("m", p.m.to_string()),
            ("eps", p.eps.to_string()),
            ("tau", p.tau.to_string()),
            ("lambda0", p.lambda0.to_string()),
            ("d", p.d.to_string()),
            ("k", p.k.to_string()),
            ("kappa", p.kappa.to_string()),
            ("beta", p.beta.to_string()),
            ("dt", p.dt.to_string()),
            ("alpha_sav", p.alpha_sav.to_string()),
            ("c0_sav", p.c0_sav.to_string()),
        ],
    }
}

pub fn physics_from_entries(kv: &BTreeMap<String, String>) -> Result<Physics, TrainError> {
    let get = |k: &str| -> Result<f64, TrainError> {
        kv.get(k)
            .ok_or_else(|| TrainError::InvalidDataset(format!("missing {k}")))?
            .parse()
            .map_err(|_| TrainError::InvalidDataset(format!("{k} is not a number")))
    };
    match kv.get("model").map(String::as_str) {
        Some("ac") => Ok(Physics::AllenCahn(AcParams { eps: get("eps")?, beta: get("beta")?, dt: get("dt")? })),
        Some("dendrite") => Ok(Physics::Dendrite(DendriteParams {
            sigma: get("sigma")?,
            m: get("m")? as u32,
            eps: get("eps")?,
            tau: get("tau")?,
            lambda0: get("lambda0")?,
            d: get("d")?,
            k: get("k")?,
            kappa: get("kappa")?,
            beta: get("beta")?,
            dt: get("dt")?,
            alpha_sav: get("alpha_sav")?,
            c0_sav: get("c0_sav")?,
        })),
        other => Err(TrainError::InvalidDataset(format!("unknown model {other:?}"))),
    }
}

/// Initial-condition family for Allen-Cahn samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcFamily {
    PerturbedDisk(DiskRanges),
    /// Two or three round disks with radii in `[0.08, 0.2]`.
    MultiDisk,
    RandomField,
}

impl IcFamily {
    fn name(&self) -> String {
        match self {
            IcFamily::PerturbedDisk(r) => format!("perturbed_disk_m{}", r.modes),
            IcFamily::MultiDisk => "multi_disk".into(),
            IcFamily::RandomField => "random_field".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcDatasetSpec {
    pub count: usize,
    pub seed: u64,
    pub grid: Grid2D,
    pub family: IcFamily,
    pub params: AcParams,
    /// Attach one splitting step as the target of every sample.
    pub targets: bool,
}

/// Draws one Allen-Cahn initial condition.
pub fn sample_ac_ic<R: Rng + ?Sized>(rng: &mut R, grid: Grid2D, family: &IcFamily, eps: f64) -> Result<Field2D, TrainError> {
    Ok(match family {
        IcFamily::PerturbedDisk(ranges) => ic_perturbed_disk(grid, &sample_disk_spec(rng, ranges), eps)?,
        IcFamily::MultiDisk => {
            let k = rng.random_range(2..=3);
            let l = grid.length();
            let centers: Vec<(f64, f64)> =
                (0..k).map(|_| (rng.random_range(0.0..l), rng.random_range(0.0..l))).collect();
            let radii: Vec<f64> = (0..k).map(|_| rng.random_range(0.08..=0.2) * l).collect();
            ic_multi_disk(grid, &centers, &radii, eps)?
        }
        IcFamily::RandomField => ic_random_field(rng, grid),
    })
}

pub fn gen_ac_dataset(spec: &AcDatasetSpec) -> Result<Dataset, TrainError> {
    if spec.count == 0 {
        return Err(TrainError::InvalidConfig("dataset count must be positive".into()));
    }
    spec.params.validate(&spec.grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let u = sample_ac_ic(&mut rng, spec.grid, &spec.family, spec.params.eps)?;
        let target = if spec.targets { Some(ac_split_step(&u, &spec.params)?) } else { None };
        samples.push(Sample { phase: u, temperature: None, target });
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("generator".into(), "allen_cahn".into());
    provenance.insert("family".into(), spec.family.name());
    provenance.insert("seed".into(), spec.seed.to_string());
    provenance.insert("count".into(), spec.count.to_string());
    provenance.insert("n".into(), spec.grid.n().to_string());
    provenance.insert("length".into(), spec.grid.length().to_string());
    if spec.targets {
        provenance.insert("target_solver".into(), "split_step".into());
    }
    Ok(Dataset { physics: Physics::AllenCahn(spec.params), samples, provenance })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DendriteDatasetSpec {
    pub grid: Grid2D,
    /// Grain counts of the initial conditions, one entry per arrangement kind.
    pub grain_counts: Vec<usize>,
    /// Random arrangements per grain count.
    pub arrangements: usize,
    /// States kept per trajectory.
    pub states: usize,
    /// Solver steps between kept states.
    pub stride: usize,
    pub seed: u64,
    pub targets: bool,
}

impl DendriteDatasetSpec {
    /// 4 arrangements each of 1, 2 and 3 grains, 500 states every 10 steps.
    pub fn standard(grid: Grid2D, seed: u64) -> Self {
        Self { grid, grain_counts: vec![1, 2, 3], arrangements: 4, states: 500, stride: 10, seed, targets: false }
    }
}

/// Uniform grain centres at least four seed radii apart (periodic distance).
pub fn sample_grain_centers<R: Rng + ?Sized>(rng: &mut R, grid: Grid2D, count: usize, p: &DendriteParams) -> Vec<(f64, f64)> {
    let l = grid.length();
    let min_sep = 4.0 * SEED_RADIUS_EPS * p.eps;
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(count);
    let mut rejected = 0;
    while centers.len() < count {
        let c = (rng.random_range(0.0..l), rng.random_range(0.0..l));
        let ok = centers.iter().all(|&(x, y)| periodic_delta(c.0 - x, l).hypot(periodic_delta(c.1 - y, l)) >= min_sep);
        // Crowded domains fall back to unconstrained placement.
        if ok || rejected >= 10_000 {
            centers.push(c);
        } else {
            rejected += 1;
        }
    }
    centers
}

fn dendrite_trajectory(
    centers: &[(f64, f64)],
    spec: &DendriteDatasetSpec,
    p: &DendriteParams,
) -> Result<Vec<Sample>, TrainError> {
    let (phi, u) = ic_dendrite(spec.grid, centers, p)?;
    let mut state = SavState::new(phi, u, p)?;
    let mut out = Vec::with_capacity(spec.states);
    for k in 0..spec.states {
        if k > 0 {
            for _ in 0..spec.stride {
                state = sav_step(&state, p)?.0;
            }
        }
        let target = if spec.targets { Some(sav_step(&state, p)?.0.phi) } else { None };
        out.push(Sample { phase: state.phi.clone(), temperature: Some(state.u.clone()), target });
    }
    Ok(out)
}

/// SAV trajectories from random grain arrangements, sampled at a fixed stride.
/// Trajectories run in parallel and are concatenated in a fixed order.
pub fn gen_dendrite_dataset(spec: &DendriteDatasetSpec, p: &DendriteParams) -> Result<Dataset, TrainError> {
    p.validate()?;
    if spec.states == 0 || spec.arrangements == 0 || spec.grain_counts.is_empty() || spec.stride == 0 {
        return Err(TrainError::InvalidConfig("dataset sizes and stride must be positive".into()));
    }
    if spec.grain_counts.iter().any(|&g| g == 0) {
        return Err(TrainError::InvalidConfig("grain counts must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut arrangements = Vec::new();
    for &g in &spec.grain_counts {
        for _ in 0..spec.arrangements {
            arrangements.push(sample_grain_centers(&mut rng, spec.grid, g, p));
        }
    }
    let trajectories: Vec<Result<Vec<Sample>, TrainError>> =
        arrangements.par_iter().map(|c| dendrite_trajectory(c, spec, p)).collect();
    let mut samples = Vec::new();
    for t in trajectories {
        samples.extend(t?);
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("generator".into(), "dendrite_sav".into());
    provenance.insert("seed".into(), spec.seed.to_string());
    provenance.insert("n".into(), spec.grid.n().to_string());
    provenance.insert("length".into(), spec.grid.length().to_string());
    provenance.insert(
        "grain_counts".into(),
        spec.grain_counts.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(","),
    );
    provenance.insert("arrangements".into(), spec.arrangements.to_string());
    provenance.insert("states".into(), spec.states.to_string());
    provenance.insert("stride".into(), spec.stride.to_string());
    Ok(Dataset { physics: Physics::Dendrite(*p), samples, provenance })
}
