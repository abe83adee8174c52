use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::graph::{Gradients, Op, Tape};
use super::{NeuralError, Tensor4};
use crate::dendrite::DendriteParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Gelu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        })
    }
}

impl FromStr for Activation {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            _ => Err(NeuralError::InvalidSpec(format!("unknown activation {s:?}"))),
        }
    }
}

/// Encoder-decoder with `levels` stride-2 stages, `hidden·multiplier^i`
/// channels at level `i` and concatenated skips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnetSpec {
    pub levels: usize,
    pub hidden: usize,
    pub multiplier: usize,
    pub kernel: usize,
    pub act: Activation,
}

impl UnetSpec {
    /// Allen-Cahn comparison UNet (37021 parameters).
    pub fn allen_cahn() -> Self {
        Self { levels: 4, hidden: 2, multiplier: 2, kernel: 3, act: Activation::Tanh }
    }

    /// Diffusion block of the prescribed RDNO.
    pub fn dendrite() -> Self {
        Self { levels: 4, hidden: 8, multiplier: 2, kernel: 3, act: Activation::Tanh }
    }

    fn channels(&self, level: usize) -> usize {
        self.hidden * self.multiplier.pow(level as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArchitectureSpec {
    /// Lifting, `depth` residual `h + act(conv(h))` layers, projection, then a
    /// single wide diffusion convolution.
    Rdno { width: usize, depth: usize, kernel: usize, diffusion: usize, act: Activation },
    Unet(UnetSpec),
    Fno { layers: usize, modes: usize, width: usize, act: Activation },
    /// UNet applied to `φ − (dt/τ)∇φE2(φ, U)`.
    PrescribedRdno { unet: UnetSpec, params: DendriteParams },
}

impl ArchitectureSpec {
    /// Allen-Cahn RDNO: width 10, two reaction layers, diffusion kernel 17.
    pub fn rdno_allen_cahn() -> Self {
        ArchitectureSpec::Rdno { width: 10, depth: 2, kernel: 3, diffusion: 17, act: Activation::Tanh }
    }

    pub fn fno_allen_cahn() -> Self {
        ArchitectureSpec::Fno { layers: 4, modes: 20, width: 16, act: Activation::Gelu }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ArchitectureSpec::Rdno { .. } => "rdno",
            ArchitectureSpec::Unet(_) => "unet",
            ArchitectureSpec::Fno { .. } => "fno",
            ArchitectureSpec::PrescribedRdno { .. } => "prescribed_rdno",
        }
    }

    /// Number of input tensors: `u` or `(φ, U)`.
    pub fn input_count(&self) -> usize {
        match self {
            ArchitectureSpec::PrescribedRdno { .. } => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::InvalidSpec(m));
        let odd = |k: usize, what: &str| -> Result<(), NeuralError> {
            if k % 2 == 1 {
                Ok(())
            } else {
                Err(NeuralError::InvalidSpec(format!("{what} kernel {k} must be odd")))
            }
        };
        match self {
            ArchitectureSpec::Rdno { width, kernel, diffusion, .. } => {
                if *width == 0 {
                    return bad("rdno width must be positive".into());
                }
                odd(*kernel, "reaction")?;
                odd(*diffusion, "diffusion")?;
            }
            ArchitectureSpec::Unet(u) | ArchitectureSpec::PrescribedRdno { unet: u, .. } => {
                if u.levels == 0 || u.hidden == 0 || u.multiplier == 0 {
                    return bad("unet levels, hidden and multiplier must be positive".into());
                }
                odd(u.kernel, "unet")?;
            }
            ArchitectureSpec::Fno { layers, modes, width, .. } => {
                if *layers == 0 || *modes == 0 || *width == 0 {
                    return bad("fno layers, modes and width must be positive".into());
                }
            }
        }
        if let ArchitectureSpec::PrescribedRdno { params, .. } = self {
            if !(params.eps > 0.0 && params.tau > 0.0 && params.dt > 0.0) {
                return bad("prescribed reaction needs positive eps, tau and dt".into());
            }
        }
        Ok(())
    }

    /// Checks grid compatibility for an `n × n` input.
    pub fn check_grid(&self, n: usize) -> Result<(), NeuralError> {
        match self {
            ArchitectureSpec::Unet(u) | ArchitectureSpec::PrescribedRdno { unet: u, .. } => {
                let f = 1usize << u.levels;
                if n % f != 0 {
                    return Err(NeuralError::Shape(format!("grid {n} not divisible by 2^{} = {f}", u.levels)));
                }
            }
            ArchitectureSpec::Fno { modes, .. } => {
                if 2 * modes > n {
                    return Err(NeuralError::Shape(format!("{modes} modes exceed n/2 for n = {n}")));
                }
            }
            ArchitectureSpec::Rdno { .. } => {}
        }
        Ok(())
    }

    /// Canonical one-line text form.
    pub fn to_text(&self) -> String {
        let unet = |u: &UnetSpec| {
            format!("levels={} hidden={} multiplier={} kernel={} act={}", u.levels, u.hidden, u.multiplier, u.kernel, u.act)
        };
        match self {
            ArchitectureSpec::Rdno { width, depth, kernel, diffusion, act } => {
                format!("rdno width={width} depth={depth} kernel={kernel} diffusion={diffusion} act={act}")
            }
            ArchitectureSpec::Unet(u) => format!("unet {}", unet(u)),
            ArchitectureSpec::Fno { layers, modes, width, act } => {
                format!("fno layers={layers} modes={modes} width={width} act={act}")
            }
            ArchitectureSpec::PrescribedRdno { unet: u, params: p } => format!(
                "prescribed_rdno {} sigma={} m={} eps={} tau={} lambda0={} d={} k={} kappa={} beta={} dt={} alpha_sav={} c0_sav={}",
                unet(u),
                p.sigma,
                p.m,
                p.eps,
                p.tau,
                p.lambda0,
                p.d,
                p.k,
                p.kappa,
                p.beta,
                p.dt,
                p.alpha_sav,
                p.c0_sav
            ),
        }
    }

    pub fn parse(text: &str) -> Result<Self, NeuralError> {
        let mut words = text.split_whitespace();
        let kind = words.next().ok_or_else(|| NeuralError::InvalidSpec("empty architecture text".into()))?;
        let mut kv = BTreeMap::new();
        for w in words {
            let (k, v) =
                w.split_once('=').ok_or_else(|| NeuralError::InvalidSpec(format!("expected key=value, got {w:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| NeuralError::InvalidSpec(format!("{kind}: missing {k}")));
        let int = |k: &str| -> Result<usize, NeuralError> {
            get(k)?.parse().map_err(|_| NeuralError::InvalidSpec(format!("{k} must be a non-negative integer")))
        };
        let real = |k: &str| -> Result<f64, NeuralError> {
            get(k)?.parse().map_err(|_| NeuralError::InvalidSpec(format!("{k} must be a number")))
        };
        let act = || -> Result<Activation, NeuralError> { get("act")?.parse() };
        let unet = || -> Result<UnetSpec, NeuralError> {
            Ok(UnetSpec {
                levels: int("levels")?,
                hidden: int("hidden")?,
                multiplier: int("multiplier")?,
                kernel: int("kernel")?,
                act: act()?,
            })
        };
        let spec = match kind {
            "rdno" => ArchitectureSpec::Rdno {
                width: int("width")?,
                depth: int("depth")?,
                kernel: int("kernel")?,
                diffusion: int("diffusion")?,
                act: act()?,
            },
            "unet" => ArchitectureSpec::Unet(unet()?),
            "fno" => ArchitectureSpec::Fno { layers: int("layers")?, modes: int("modes")?, width: int("width")?, act: act()? },
            "prescribed_rdno" => ArchitectureSpec::PrescribedRdno {
                unet: unet()?,
                params: DendriteParams {
                    sigma: real("sigma")?,
                    m: int("m")? as u32,
                    eps: real("eps")?,
                    tau: real("tau")?,
                    lambda0: real("lambda0")?,
                    d: real("d")?,
                    k: real("k")?,
                    kappa: real("kappa")?,
                    beta: real("beta")?,
                    dt: real("dt")?,
                    alpha_sav: real("alpha_sav")?,
                    c0_sav: real("c0_sav")?,
                },
            },
            other => return Err(NeuralError::InvalidSpec(format!("unknown architecture {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 of [`ArchitectureSpec::to_text`].
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    /// Every trainable tensor with its shape and initializer.
    pub(crate) fn parameters(&self) -> Vec<ParamDesc> {
        let mut out = Vec::new();
        let conv = |out: &mut Vec<ParamDesc>, name: &str, co: usize, ci: usize, k: usize, bias: bool| {
            out.push(ParamDesc { name: format!("{name}.w"), shape: vec![co, ci, k, k], init: Init::FanIn(ci * k * k) });
            if bias {
                out.push(ParamDesc { name: format!("{name}.b"), shape: vec![co], init: Init::Zero });
            }
        };
        let convt = |out: &mut Vec<ParamDesc>, name: &str, ci: usize, co: usize, k: usize| {
            out.push(ParamDesc { name: format!("{name}.w"), shape: vec![ci, co, k, k], init: Init::FanIn(ci * k * k) });
            out.push(ParamDesc { name: format!("{name}.b"), shape: vec![co], init: Init::Zero });
        };
        match self {
            ArchitectureSpec::Rdno { width, depth, kernel, diffusion, .. } => {
                conv(&mut out, "lift", *width, 1, 1, true);
                for l in 0..*depth {
                    conv(&mut out, &format!("reaction{l}"), *width, *width, *kernel, true);
                }
                conv(&mut out, "project", 1, *width, 1, true);
                conv(&mut out, "diffusion", 1, 1, *diffusion, true);
            }
            ArchitectureSpec::Unet(u) | ArchitectureSpec::PrescribedRdno { unet: u, .. } => {
                let k = u.kernel;
                conv(&mut out, "lift.0", u.hidden, 1, k, true);
                conv(&mut out, "lift.1", u.hidden, u.hidden, k, true);
                for i in 0..u.levels {
                    let c = u.channels(i);
                    let c2 = u.channels(i + 1);
                    conv(&mut out, &format!("down{i}.pool"), c, c, k, true);
                    conv(&mut out, &format!("down{i}.0"), c2, c, k, true);
                    conv(&mut out, &format!("down{i}.1"), c2, c2, k, true);
                    convt(&mut out, &format!("up{i}.unpool"), c2, c, k);
                    conv(&mut out, &format!("up{i}.0"), c, 2 * c, k, true);
                    conv(&mut out, &format!("up{i}.1"), c, c, k, true);
                }
                conv(&mut out, "project", 1, u.hidden, 1, true);
            }
            ArchitectureSpec::Fno { layers, modes, width, .. } => {
                conv(&mut out, "lift", *width, 1, 1, true);
                for l in 0..*layers {
                    for part in ["re", "im"] {
                        out.push(ParamDesc {
                            name: format!("spectral{l}.{part}"),
                            shape: vec![*width, *width, 2, *modes, *modes],
                            init: Init::Spectral(width * width),
                        });
                    }
                    conv(&mut out, &format!("skip{l}"), *width, *width, 1, true);
                }
                conv(&mut out, "project", 1, *width, 1, true);
            }
        }
        out
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }

    fn build(&self) -> Tape {
        let mut t = Tape::new();
        let conv = |t: &mut Tape, x: usize, name: &str, stride: usize| {
            t.push(Op::Conv { x, weight: format!("{name}.w"), bias: Some(format!("{name}.b")), stride })
        };
        match self {
            ArchitectureSpec::Rdno { depth, act, .. } => {
                let x = t.push(Op::Input(0));
                let mut h = conv(&mut t, x, "lift", 1);
                for l in 0..*depth {
                    let c = conv(&mut t, h, &format!("reaction{l}"), 1);
                    let a = t.push(Op::Act { x: c, act: *act });
                    h = t.push(Op::Add(h, a));
                }
                let r = conv(&mut t, h, "project", 1);
                conv(&mut t, r, "diffusion", 1);
            }
            ArchitectureSpec::Unet(u) => {
                let x = t.push(Op::Input(0));
                build_unet(&mut t, x, u);
            }
            ArchitectureSpec::PrescribedRdno { unet, params } => {
                let phi = t.push(Op::Input(0));
                let u = t.push(Op::Input(1));
                let r = t.push(Op::Reaction { phi, u, params: *params });
                build_unet(&mut t, r, unet);
            }
            ArchitectureSpec::Fno { layers, modes, act, .. } => {
                let x = t.push(Op::Input(0));
                let mut h = conv(&mut t, x, "lift", 1);
                for l in 0..*layers {
                    let s = t.push(Op::Spectral {
                        x: h,
                        re: format!("spectral{l}.re"),
                        im: format!("spectral{l}.im"),
                        modes: *modes,
                    });
                    let p = conv(&mut t, h, &format!("skip{l}"), 1);
                    h = t.push(Op::Add(s, p));
                    if l + 1 < *layers {
                        h = t.push(Op::Act { x: h, act: *act });
                    }
                }
                conv(&mut t, h, "project", 1);
            }
        }
        t
    }
}

fn build_unet(t: &mut Tape, x: usize, u: &UnetSpec) -> usize {
    let conv = |t: &mut Tape, x: usize, name: &str, stride: usize| {
        t.push(Op::Conv { x, weight: format!("{name}.w"), bias: Some(format!("{name}.b")), stride })
    };
    let double = |t: &mut Tape, x: usize, name: &str| {
        let a = conv(t, x, &format!("{name}.0"), 1);
        let a = t.push(Op::Act { x: a, act: u.act });
        let b = conv(t, a, &format!("{name}.1"), 1);
        t.push(Op::Act { x: b, act: u.act })
    };
    let mut h = double(t, x, "lift");
    let mut skips = Vec::with_capacity(u.levels);
    for i in 0..u.levels {
        skips.push(h);
        let p = conv(t, h, &format!("down{i}.pool"), 2);
        h = double(t, p, &format!("down{i}"));
    }
    for i in (0..u.levels).rev() {
        let name = format!("up{i}.unpool");
        let up = t.push(Op::ConvT { x: h, weight: format!("{name}.w"), bias: Some(format!("{name}.b")), stride: 2 });
        let cat = t.push(Op::Concat(skips[i], up));
        h = double(t, cat, &format!("up{i}"));
    }
    conv(t, h, "project", 1)
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zero,
    /// Uniform in `±√(1/fan_in)`.
    FanIn(usize),
    /// Uniform in `±1/(in·out)`.
    Spectral(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamDesc {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter tensors in name order, tied to the text of their architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    spec: String,
    tensors: BTreeMap<String, ParamTensor>,
}

impl ModelWeights {
    pub fn new(spec: &ArchitectureSpec, tensors: BTreeMap<String, ParamTensor>) -> Result<Self, NeuralError> {
        let w = Self { spec: spec.to_text(), tensors };
        w.check(spec)?;
        Ok(w)
    }

    pub(crate) fn from_parts(spec: String, tensors: BTreeMap<String, ParamTensor>) -> Self {
        Self { spec, tensors }
    }

    pub fn spec_text(&self) -> &str {
        &self.spec
    }

    pub fn spec(&self) -> Result<ArchitectureSpec, NeuralError> {
        ArchitectureSpec::parse(&self.spec)
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor, NeuralError> {
        self.tensors.get(name).ok_or_else(|| NeuralError::WeightMismatch(format!("missing tensor {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamTensor, NeuralError> {
        self.tensors.get_mut(name).ok_or_else(|| NeuralError::WeightMismatch(format!("missing tensor {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamTensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamTensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    /// Names and shapes agree exactly with `spec`, and all values are finite.
    pub fn check(&self, spec: &ArchitectureSpec) -> Result<(), NeuralError> {
        let expected = spec.parameters();
        if expected.len() != self.tensors.len() {
            return Err(NeuralError::WeightMismatch(format!(
                "{} tensors, architecture needs {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for d in &expected {
            let t = self.get(&d.name)?;
            if t.shape != d.shape || t.data.len() != d.shape.iter().product::<usize>() {
                return Err(NeuralError::WeightMismatch(format!("{}: shape {:?}, expected {:?}", d.name, t.shape, d.shape)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::WeightMismatch(format!("{}: non-finite value", d.name)));
            }
        }
        Ok(())
    }

    /// All values concatenated in name order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.values().flat_map(|t| t.data.iter().copied()).collect()
    }
}

/// Fan-in uniform kernels, zero biases, `1/(in·out)`-scaled spectral weights.
pub fn init_weights<R: Rng + ?Sized>(spec: &ArchitectureSpec, rng: &mut R) -> ModelWeights {
    let mut tensors = BTreeMap::new();
    for d in spec.parameters() {
        let len: usize = d.shape.iter().product();
        let bound = match d.init {
            Init::Zero => 0.0,
            Init::FanIn(fan) => (1.0 / fan as f64).sqrt(),
            Init::Spectral(io) => 1.0 / io as f64,
        };
        let data = if bound == 0.0 { vec![0.0; len] } else { (0..len).map(|_| rng.random_range(-bound..bound)).collect() };
        tensors.insert(d.name, ParamTensor { shape: d.shape, data });
    }
    ModelWeights { spec: spec.to_text(), tensors }
}

/// An architecture with its layer graph.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ArchitectureSpec,
    tape: Tape,
}

/// Activations of one forward pass, needed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Tensor4>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor4 {
        self.acts.last().expect("non-empty network")
    }
}

impl Model {
    pub fn new(spec: ArchitectureSpec) -> Result<Self, NeuralError> {
        spec.validate()?;
        let tape = spec.build();
        Ok(Self { spec, tape })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    fn check_inputs(&self, w: &ModelWeights, inputs: &[Tensor4]) -> Result<(), NeuralError> {
        if w.spec_text() != self.spec.to_text() {
            return Err(NeuralError::WeightMismatch(format!(
                "weights for {:?}, model is {:?}",
                w.spec_text(),
                self.spec.to_text()
            )));
        }
        for x in inputs {
            if x.rows() != x.cols() {
                return Err(NeuralError::Shape(format!("square planes required, got {}x{}", x.rows(), x.cols())));
            }
            if x.channels() != 1 {
                return Err(NeuralError::Shape(format!("single-channel inputs required, got {}", x.channels())));
            }
            self.spec.check_grid(x.rows())?;
        }
        Ok(())
    }

    pub fn forward_cached(&self, w: &ModelWeights, inputs: &[Tensor4]) -> Result<ForwardCache, NeuralError> {
        self.check_inputs(w, inputs)?;
        Ok(ForwardCache { acts: self.tape.forward(w, inputs)? })
    }

    pub fn forward(&self, w: &ModelWeights, inputs: &[Tensor4]) -> Result<Tensor4, NeuralError> {
        let mut acts = self.forward_cached(w, inputs)?.acts;
        Ok(acts.pop().expect("non-empty network"))
    }

    /// Gradients of `⟨g, output⟩` with respect to all parameters and inputs.
    pub fn backward(&self, w: &ModelWeights, cache: &ForwardCache, g: Tensor4) -> Result<Gradients, NeuralError> {
        self.tape.backward(w, &cache.acts, g)
    }
}

fn run(spec: &ArchitectureSpec, expect: &str, w: &ModelWeights, inputs: &[Tensor4]) -> Result<Tensor4, NeuralError> {
    if spec.kind() != expect {
        return Err(NeuralError::InvalidSpec(format!("expected a {expect} spec, got {}", spec.kind())));
    }
    Model::new(spec.clone())?.forward(w, inputs)
}

pub fn forward_rdno(u: &Tensor4, w: &ModelWeights, spec: &ArchitectureSpec) -> Result<Tensor4, NeuralError> {
    run(spec, "rdno", w, std::slice::from_ref(u))
}

pub fn forward_unet(x: &Tensor4, w: &ModelWeights, spec: &ArchitectureSpec) -> Result<Tensor4, NeuralError> {
    run(spec, "unet", w, std::slice::from_ref(x))
}

pub fn forward_fno(x: &Tensor4, w: &ModelWeights, spec: &ArchitectureSpec) -> Result<Tensor4, NeuralError> {
    run(spec, "fno", w, std::slice::from_ref(x))
}

pub fn forward_prescribed_rdno(
    phi: &Tensor4,
    u: &Tensor4,
    w: &ModelWeights,
    spec: &ArchitectureSpec,
) -> Result<Tensor4, NeuralError> {
    run(spec, "prescribed_rdno", w, &[phi.clone(), u.clone()])
}

/// Output of the prescribed reaction stage alone.
pub fn prescribed_reaction(phi: &Tensor4, u: &Tensor4, p: &DendriteParams) -> Result<Tensor4, NeuralError> {
    let mut t = Tape::new();
    let a = t.push(Op::Input(0));
    let b = t.push(Op::Input(1));
    t.push(Op::Reaction { phi: a, u: b, params: *p });
    let empty = ModelWeights { spec: String::new(), tensors: BTreeMap::new() };
    let mut acts = t.forward(&empty, &[phi.clone(), u.clone()])?;
    Ok(acts.pop().expect("reaction node"))
}
