//! Forward passes of the pre-trained networks `g` (CDS quote from
//! `(rho, beta, x0)`) and `f` (all `x0` from `(rho, beta)`), and the binary
//! weight format shared with the training side. See `docs/format.md` for
//! the byte layout.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LBNW";
pub const VERSION: u32 = 1;

/// Conv filters and kernel sizes of `g`, then its dense widths.
pub const G_CONV: [(usize, usize); 4] = [(16, 4), (32, 16), (64, 32), (128, 64)];
pub const G_DENSE: [usize; 4] = [256, 128, 64, 8];
/// Conv filters and kernel sizes of `f`; dense widths are `4K, 2K, K`.
pub const F_CONV: [(usize, usize); 4] = [(16, 2), (32, 16), (64, 32), (128, 64)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkTag {
    G,
    F,
    /// Untagged network; only shape composition is checked.
    Generic,
}

impl NetworkTag {
    fn byte(self) -> u8 {
        match self {
            NetworkTag::G => b'g',
            NetworkTag::F => b'f',
            NetworkTag::Generic => b'n',
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            b'g' => Ok(NetworkTag::G),
            b'f' => Ok(NetworkTag::F),
            b'n' => Ok(NetworkTag::Generic),
            _ => Err(Error::weights(None, format!("unknown network tag byte {b:#04x}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
        }
    }
}

/// One layer. Tensors use the row-major layouts `kernel x in x filters`
/// (conv) and `in x units` (dense).
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        activation: Activation,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Dense {
        inputs: usize,
        units: usize,
        activation: Activation,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Flatten,
}

impl Layer {
    fn kind(&self) -> u8 {
        match self {
            Layer::Conv1d { .. } => 1,
            Layer::Dense { .. } => 2,
            Layer::Flatten => 3,
        }
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Seq { len: usize, channels: usize },
    Flat(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub tag: NetworkTag,
    pub padding: Padding,
    pub input_len: usize,
    pub input_channels: usize,
    /// Number of names for `f`; output width otherwise.
    pub k: usize,
    /// Min-max scale inputs to `[0, 1]` with `ranges` before the first layer.
    pub scale_inputs: bool,
    /// Training range of each input feature.
    pub ranges: Vec<(f64, f64)>,
    pub layers: Vec<Layer>,
}

impl NetworkWeights {
    /// Checks that the layers compose, tensors are finite and, for tagged
    /// networks, that the architecture is the published one.
    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.input_channels == 0 {
            return Err(Error::weights(None, "empty input"));
        }
        if self.ranges.len() != self.input_len * self.input_channels {
            return Err(Error::weights(None, format!("{} input ranges for {} inputs", self.ranges.len(), self.input_len * self.input_channels)));
        }
        if self.scale_inputs {
            if let Some((lo, hi)) = self.ranges.iter().find(|(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
                return Err(Error::weights(None, format!("degenerate input range [{lo}, {hi}]")));
            }
        }
        let mut shape = Shape::Seq {
            len: self.input_len,
            channels: self.input_channels,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            shape = self.next_shape(i, layer, shape)?;
        }
        let out = match shape {
            Shape::Flat(n) => n,
            Shape::Seq { .. } => return Err(Error::weights(None, "network must end with a flat output")),
        };
        match self.tag {
            NetworkTag::G => self.check_architecture(&G_CONV, &G_DENSE, 3)?,
            NetworkTag::F => {
                let k = self.k;
                self.check_architecture(&F_CONV, &[4 * k, 2 * k, k], 2)?
            }
            NetworkTag::Generic => {}
        }
        if self.tag != NetworkTag::G && out != self.k {
            return Err(Error::weights(None, format!("header declares K = {} but the network has {out} outputs", self.k)));
        }
        Ok(())
    }

    fn next_shape(&self, i: usize, layer: &Layer, shape: Shape) -> Result<Shape> {
        let bad = |msg: String| Error::weights(Some(i), msg);
        match (layer, shape) {
            (
                Layer::Conv1d {
                    in_channels,
                    filters,
                    kernel,
                    weights,
                    bias,
                    ..
                },
                Shape::Seq { len, channels },
            ) => {
                if *in_channels != channels {
                    return Err(bad(format!("conv expects {in_channels} channels, gets {channels}")));
                }
                check_tensor(i, weights, kernel * in_channels * filters, "kernel")?;
                check_tensor(i, bias, *filters, "bias")?;
                if *kernel == 0 || *filters == 0 {
                    return Err(bad("empty conv layer".into()));
                }
                let out_len = match self.padding {
                    Padding::Same => len,
                    Padding::Valid if *kernel <= len => len - kernel + 1,
                    Padding::Valid => return Err(bad(format!("kernel {kernel} longer than sequence {len} without padding"))),
                };
                Ok(Shape::Seq {
                    len: out_len,
                    channels: *filters,
                })
            }
            (Layer::Flatten, Shape::Seq { len, channels }) => Ok(Shape::Flat(len * channels)),
            (
                Layer::Dense {
                    inputs,
                    units,
                    weights,
                    bias,
                    ..
                },
                Shape::Flat(n),
            ) => {
                if *inputs != n {
                    return Err(bad(format!("dense expects {inputs} inputs, gets {n}")));
                }
                check_tensor(i, weights, inputs * units, "kernel")?;
                check_tensor(i, bias, *units, "bias")?;
                Ok(Shape::Flat(*units))
            }
            (Layer::Flatten, Shape::Flat(_)) => Err(bad("flatten applied to a flat input".into())),
            (Layer::Conv1d { .. }, Shape::Flat(_)) => Err(bad("conv applied to a flat input".into())),
            (Layer::Dense { .. }, Shape::Seq { .. }) => Err(bad("dense applied to a sequence; flatten first".into())),
        }
    }

    fn check_architecture(&self, conv: &[(usize, usize)], dense: &[usize], input_len: usize) -> Result<()> {
        let name = if self.tag == NetworkTag::G { "g" } else { "f" };
        let mismatch = |layer: Option<usize>, msg: String| Error::weights(layer, format!("architecture mismatch for {name}: {msg}"));
        if self.input_len != input_len || self.input_channels != 1 {
            return Err(mismatch(None, format!("input {}x{}, expected {input_len}x1", self.input_len, self.input_channels)));
        }
        let expected = conv.len() + 1 + dense.len();
        if self.layers.len() != expected {
            return Err(mismatch(None, format!("{} layers, expected {expected}", self.layers.len())));
        }
        let last = expected - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let act_ok = |a: &Activation| if i == last { *a == Activation::None } else { *a == Activation::Relu };
            let ok = match layer {
                Layer::Conv1d {
                    filters, kernel, activation, ..
                } => i < conv.len() && (*filters, *kernel) == conv[i] && act_ok(activation),
                Layer::Flatten => i == conv.len(),
                Layer::Dense { units, activation, .. } => i > conv.len() && *units == dense[i - conv.len() - 1] && act_ok(activation),
            };
            if !ok {
                return Err(mismatch(Some(i), format!("unexpected layer {layer_desc}", layer_desc = describe(layer))));
            }
        }
        Ok(())
    }

    /// Raw network output for one input vector (`input_len * channels`
    /// values, sequence-major).
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.input_len * self.input_channels, "wrong input width");
        let mut x: Vec<f64> = if self.scale_inputs {
            input.iter().zip(&self.ranges).map(|(v, (lo, hi))| (v - lo) / (hi - lo)).collect()
        } else {
            input.to_vec()
        };
        let mut len = self.input_len;
        for layer in &self.layers {
            match layer {
                Layer::Conv1d {
                    in_channels,
                    filters,
                    kernel,
                    activation,
                    weights,
                    bias,
                } => {
                    let (out_len, pad) = match self.padding {
                        Padding::Same => (len, (kernel - 1) / 2),
                        Padding::Valid => (len - kernel + 1, 0),
                    };
                    let mut y = vec![0.0; out_len * filters];
                    for t in 0..out_len {
                        let row = &mut y[t * filters..(t + 1) * filters];
                        for (o, r) in row.iter_mut().enumerate() {
                            *r = bias[o] as f64;
                        }
                        for j in 0..*kernel {
                            let src = t + j;
                            if src < pad || src - pad >= len {
                                continue;
                            }
                            let s = src - pad;
                            for c in 0..*in_channels {
                                let v = x[s * in_channels + c];
                                if v == 0.0 {
                                    continue;
                                }
                                let w = &weights[(j * in_channels + c) * filters..(j * in_channels + c + 1) * filters];
                                for (r, wv) in row.iter_mut().zip(w) {
                                    *r += v * *wv as f64;
                                }
                            }
                        }
                        for r in row.iter_mut() {
                            *r = activation.apply(*r);
                        }
                    }
                    x = y;
                    len = out_len;
                }
                Layer::Flatten => {}
                Layer::Dense {
                    inputs,
                    units,
                    activation,
                    weights,
                    bias,
                } => {
                    let mut y: Vec<f64> = bias.iter().map(|b| *b as f64).collect();
                    for i in 0..*inputs {
                        let v = x[i];
                        if v == 0.0 {
                            continue;
                        }
                        for (r, w) in y.iter_mut().zip(&weights[i * units..(i + 1) * units]) {
                            *r += v * *w as f64;
                        }
                    }
                    for r in y.iter_mut() {
                        *r = activation.apply(*r);
                    }
                    x = y;
                }
            }
        }
        x
    }

    fn in_range(&self, input: &[f64]) -> bool {
        input.iter().zip(&self.ranges).all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(self.tag.byte());
        b.push(match self.padding {
            Padding::Same => 0,
            Padding::Valid => 1,
        });
        b.push(self.scale_inputs as u8);
        b.push(0);
        for v in [self.input_len, self.input_channels, self.k, self.ranges.len()] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for (lo, hi) in &self.ranges {
            b.extend_from_slice(&lo.to_le_bytes());
            b.extend_from_slice(&hi.to_le_bytes());
        }
        b.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            b.push(layer.kind());
            let act = match layer {
                Layer::Conv1d { activation, .. } | Layer::Dense { activation, .. } => *activation,
                Layer::Flatten => Activation::None,
            };
            b.push((act == Activation::Relu) as u8);
            b.extend_from_slice(&[0, 0]);
            let dims: Vec<usize> = match layer {
                Layer::Conv1d {
                    in_channels,
                    filters,
                    kernel,
                    ..
                } => vec![*kernel, *in_channels, *filters],
                Layer::Dense { inputs, units, .. } => vec![*inputs, *units],
                Layer::Flatten => vec![],
            };
            for d in dims {
                b.extend_from_slice(&(d as u32).to_le_bytes());
            }
            if let Layer::Conv1d { weights, bias, .. } | Layer::Dense { weights, bias, .. } = layer {
                for v in weights.iter().chain(bias) {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, layer: None };
        if r.take(4)? != MAGIC {
            return Err(Error::weights(None, "not a weight file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::weights(None, format!("unsupported version {version}, expected {VERSION}")));
        }
        let tag = NetworkTag::from_byte(r.u8()?)?;
        let padding = match r.u8()? {
            0 => Padding::Same,
            1 => Padding::Valid,
            p => return Err(Error::weights(None, format!("unknown padding code {p}"))),
        };
        let scale_inputs = match r.u8()? {
            0 => false,
            1 => true,
            s => return Err(Error::weights(None, format!("bad input-scaling flag {s}"))),
        };
        r.u8()?;
        let input_len = r.u32()? as usize;
        let input_channels = r.u32()? as usize;
        let k = r.u32()? as usize;
        let n_ranges = r.u32()? as usize;
        let mut ranges = Vec::with_capacity(n_ranges.min(1024));
        for _ in 0..n_ranges {
            ranges.push((r.f64()?, r.f64()?));
        }
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for i in 0..n_layers {
            r.layer = Some(i);
            let kind = r.u8()?;
            let activation = match r.u8()? {
                0 => Activation::None,
                1 => Activation::Relu,
                a => return Err(Error::weights(Some(i), format!("unknown activation code {a}"))),
            };
            r.take(2)?;
            let layer = match kind {
                1 => {
                    let (kernel, in_channels, filters) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
                    Layer::Conv1d {
                        in_channels,
                        filters,
                        kernel,
                        activation,
                        weights: r.f32s(kernel * in_channels * filters)?,
                        bias: r.f32s(filters)?,
                    }
                }
                2 => {
                    let (inputs, units) = (r.u32()? as usize, r.u32()? as usize);
                    Layer::Dense {
                        inputs,
                        units,
                        activation,
                        weights: r.f32s(inputs * units)?,
                        bias: r.f32s(units)?,
                    }
                }
                3 => Layer::Flatten,
                other => return Err(Error::weights(Some(i), format!("unknown layer kind {other}"))),
            };
            layers.push(layer);
        }
        r.layer = None;
        let body = r.pos;
        let crc = r.u32()?;
        if r.pos != bytes.len() {
            return Err(Error::weights(None, format!("{} trailing bytes after checksum", bytes.len() - r.pos)));
        }
        if crc32fast::hash(&bytes[..body]) != crc {
            return Err(Error::weights(None, "checksum mismatch"));
        }
        let w = NetworkWeights {
            tag,
            padding,
            input_len,
            input_channels,
            k,
            scale_inputs,
            ranges,
            layers,
        };
        w.validate()?;
        Ok(w)
    }
}

fn describe(layer: &Layer) -> String {
    match layer {
        Layer::Conv1d {
            filters, kernel, activation, ..
        } => format!("conv1d {filters}/{kernel} ({activation:?})"),
        Layer::Dense { units, activation, .. } => format!("dense {units} ({activation:?})"),
        Layer::Flatten => "flatten".into(),
    }
}

fn check_tensor(i: usize, t: &[f32], n: usize, what: &str) -> Result<()> {
    if t.len() != n {
        return Err(Error::weights(Some(i), format!("{what} has {} values, expected {n}", t.len())));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::weights(Some(i), format!("non-finite {what} value")));
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    layer: Option<usize>,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::weights(self.layer, format!("file truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::weights(self.layer, "tensor size overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn load_weights(path: &Path) -> Result<NetworkWeights> {
    NetworkWeights::from_bytes(&fs::read(path)?)
}

pub fn save_weights(w: &NetworkWeights, path: &Path) -> Result<()> {
    w.validate()?;
    let mut f = fs::File::create(path)?;
    f.write_all(&w.to_bytes())?;
    Ok(())
}

/// Output of `g` with the out-of-range flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GOutput {
    pub quote: f64,
    pub in_range: bool,
}

/// `c = max(0, mean of the outputs of g(rho, beta, x0))`.
pub fn forward_g(w: &NetworkWeights, rho: f64, beta: f64, x0: f64) -> Result<GOutput> {
    if w.tag == NetworkTag::F || w.input_len * w.input_channels != 3 {
        return Err(Error::weights(None, "network does not take (rho, beta, x0)"));
    }
    let input = [rho, beta, x0];
    let out = w.forward(&input);
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    Ok(GOutput {
        quote: mean.max(0.0),
        in_range: w.in_range(&input),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FOutput {
    pub x0: Vec<f64>,
    /// Fraction of adjacent output pairs that are nondecreasing.
    pub monotone_fraction: f64,
    pub in_range: bool,
}

/// `x0 = f(rho, beta)`, one entry per name.
pub fn forward_f(w: &NetworkWeights, rho: f64, beta: f64) -> Result<FOutput> {
    if w.tag == NetworkTag::G || w.input_len * w.input_channels != 2 {
        return Err(Error::weights(None, "network does not take (rho, beta)"));
    }
    let input = [rho, beta];
    let x0 = w.forward(&input);
    Ok(FOutput {
        monotone_fraction: monotone_fraction(&x0),
        in_range: w.in_range(&input),
        x0,
    })
}

pub fn monotone_fraction(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 1.0;
    }
    v.windows(2).filter(|w| w[0] <= w[1]).count() as f64 / (v.len() - 1) as f64
}

/// One row of a training loss curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub epoch: usize,
    pub loss: f64,
    /// MAE for `g`, MAPE for `f`; absent if the trainer did not record it.
    pub metric: Option<f64>,
}

/// Reads a loss-curve CSV with header `epoch,loss[,<metric>]`.
pub fn read_loss_curve(path: &Path) -> Result<(Option<String>, Vec<LossPoint>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Dataset("empty loss curve".into()))?.split(',').map(str::trim).collect();
    if header.len() < 2 || header[0] != "epoch" || header[1] != "loss" || header.len() > 3 {
        return Err(Error::Dataset(format!("unexpected loss-curve header {header:?}")));
    }
    let metric = header.get(2).map(|s| s.to_string());
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != header.len() {
            return Err(Error::Dataset(format!("loss-curve row {} has {} cells", n + 1, cells.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Dataset(format!("bad number '{s}' in loss-curve row {}", n + 1)));
        out.push(LossPoint {
            epoch: cells[0].parse().map_err(|_| Error::Dataset(format!("bad epoch '{}'", cells[0])))?,
            loss: num(cells[1])?,
            metric: cells.get(2).map(|s| num(s)).transpose()?,
        });
    }
    Ok((metric, out))
}

pub fn write_loss_curve(path: &Path, metric: Option<&str>, points: &[LossPoint]) -> Result<()> {
    let mut s = String::from("epoch,loss");
    if let Some(m) = metric {
        s.push(',');
        s.push_str(m);
    }
    s.push('\n');
    for p in points {
        s.push_str(&format!("{},{:e}", p.epoch, p.loss));
        if metric.is_some() {
            s.push_str(&format!(",{:e}", p.metric.unwrap_or(f64::NAN)));
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// Builders for networks with the published shapes, mainly for tests and
/// tooling.
pub mod build {
    use super::*;

    /// Deterministic pseudo-random weights of small magnitude.
    fn fill(n: usize, seed: &mut u64, scale: f32) -> Vec<f32> {
        (0..n)
            .map(|_| {
                *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (((*seed >> 40) as f32 / (1u64 << 24) as f32) - 0.5) * 2.0 * scale
            })
            .collect()
    }

    /// A network with the given conv stack and dense widths; `zero` gives
    /// all-zero tensors.
    pub fn stack(tag: NetworkTag, input_len: usize, conv: &[(usize, usize)], dense: &[usize], ranges: Vec<(f64, f64)>, zero: bool, seed: u64) -> NetworkWeights {
        let mut s = seed;
        let mut layers = Vec::new();
        let mut ch = 1;
        for &(filters, kernel) in conv {
            let scale = (1.0 / (kernel * ch) as f32).sqrt();
            layers.push(Layer::Conv1d {
                in_channels: ch,
                filters,
                kernel,
                activation: Activation::Relu,
                weights: if zero { vec![0.0; kernel * ch * filters] } else { fill(kernel * ch * filters, &mut s, scale) },
                bias: if zero { vec![0.0; filters] } else { fill(filters, &mut s, 0.1) },
            });
            ch = filters;
        }
        layers.push(Layer::Flatten);
        let mut n = input_len * ch;
        for (i, &units) in dense.iter().enumerate() {
            let scale = (1.0 / n as f32).sqrt();
            layers.push(Layer::Dense {
                inputs: n,
                units,
                activation: if i + 1 == dense.len() { Activation::None } else { Activation::Relu },
                weights: if zero { vec![0.0; n * units] } else { fill(n * units, &mut s, scale) },
                bias: if zero { vec![0.0; units] } else { fill(units, &mut s, 0.1) },
            });
            n = units;
        }
        NetworkWeights {
            tag,
            padding: Padding::Same,
            input_len,
            input_channels: 1,
            k: *dense.last().unwrap_or(&0),
            scale_inputs: false,
            ranges,
            layers,
        }
    }

    pub fn g_network(zero: bool, seed: u64) -> NetworkWeights {
        stack(NetworkTag::G, 3, &G_CONV, &G_DENSE, vec![(0.0, 1.0), (-0.2, 2.6), (0.0, 6.0)], zero, seed)
    }

    pub fn f_network(k: usize, zero: bool, seed: u64) -> NetworkWeights {
        stack(NetworkTag::F, 2, &F_CONV, &[4 * k, 2 * k, k], vec![(0.0, 1.0), (-0.2, 2.6)], zero, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::build::*;
    use super::*;

    fn dense_only(inputs: usize, units: usize, weights: Vec<f32>, bias: Vec<f32>, ranges: Vec<(f64, f64)>) -> NetworkWeights {
        NetworkWeights {
            tag: NetworkTag::Generic,
            padding: Padding::Same,
            input_len: inputs,
            input_channels: 1,
            k: units,
            scale_inputs: false,
            ranges,
            layers: vec![
                Layer::Flatten,
                Layer::Dense {
                    inputs,
                    units,
                    activation: Activation::None,
                    weights,
                    bias,
                },
            ],
        }
    }

    #[test]
    fn zero_networks_output_zero() {
        let g = g_network(true, 0);
        g.validate().unwrap();
        assert_eq!(forward_g(&g, 0.3, 0.5, 2.0).unwrap().quote, 0.0);
        let f = f_network(5, true, 0);
        let out = forward_f(&f, 0.3, 0.5).unwrap();
        assert_eq!(out.x0, vec![0.0; 5]);
        assert_eq!(out.monotone_fraction, 1.0);
    }

    #[test]
    fn hand_built_affine_map() {
        // 8 outputs: o_i = a_i . (rho, beta, x0) + b_i; mean is affine
        let mut w = Vec::new();
        for _r in 0..3 {
            for i in 0..8 {
                w.push(0.125 * i as f32);
            }
        }
        let bias: Vec<f32> = (0..8).map(|i| 0.5 - 0.1 * i as f32).collect();
        let net = dense_only(3, 8, w, bias.clone(), vec![(0.0, 1.0); 3]);
        let (rho, beta, x0) = (0.25, 0.5, 2.0);
        let out = net.forward(&[rho, beta, x0]);
        for i in 0..8 {
            let exact = 0.125 * i as f32 as f64 * (rho + beta + x0) + bias[i] as f64;
            assert!((out[i] - exact).abs() < 1e-12);
        }
        let g = forward_g(&net, rho, beta, x0).unwrap();
        let mean: f64 = out.iter().sum::<f64>() / 8.0;
        assert_eq!(g.quote, mean.max(0.0));
        assert!(!g.in_range);
    }

    #[test]
    fn negative_mean_is_clamped() {
        let net = dense_only(3, 8, vec![0.0; 24], vec![-1.0; 8], vec![(0.0, 1.0); 3]);
        assert_eq!(forward_g(&net, 0.1, 0.1, 0.1).unwrap().quote, 0.0);
    }

    #[test]
    fn cumulative_sum_is_increasing() {
        // out_j = sum_{i <= j} (1 + rho^2 + ...) via a lower-triangular layer
        let k = 6;
        let hidden = 4;
        let mut w1 = vec![0.0f32; 2 * hidden];
        w1[0] = 1.0;
        w1[hidden + 1] = 1.0;
        let b1 = vec![1.0f32; hidden];
        let mut w2 = vec![0.0f32; hidden * k];
        for j in 0..k {
            for i in 0..hidden {
                w2[i * k + j] = (j + 1) as f32;
            }
        }
        let net = NetworkWeights {
            tag: NetworkTag::Generic,
            padding: Padding::Same,
            input_len: 2,
            input_channels: 1,
            k,
            scale_inputs: false,
            ranges: vec![(0.0, 1.0), (0.0, 1.0)],
            layers: vec![
                Layer::Flatten,
                Layer::Dense {
                    inputs: 2,
                    units: hidden,
                    activation: Activation::Relu,
                    weights: w1,
                    bias: b1,
                },
                Layer::Dense {
                    inputs: hidden,
                    units: k,
                    activation: Activation::None,
                    weights: w2,
                    bias: vec![0.0; k],
                },
            ],
        };
        net.validate().unwrap();
        let out = forward_f(&net, 0.3, 0.7).unwrap();
        assert!(out.x0.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(out.monotone_fraction, 1.0);
        assert!(out.in_range);
    }

    #[test]
    fn same_padding_matches_direct_convolution() {
        // kernel longer than the sequence: only in-range taps contribute
        let weights: Vec<f32> = (0..4 * 2).map(|i| 0.1 * i as f32 - 0.3).collect();
        let net = NetworkWeights {
            tag: NetworkTag::Generic,
            padding: Padding::Same,
            input_len: 3,
            input_channels: 1,
            k: 6,
            scale_inputs: false,
            ranges: vec![(0.0, 1.0); 3],
            layers: vec![
                Layer::Conv1d {
                    in_channels: 1,
                    filters: 2,
                    kernel: 4,
                    activation: Activation::None,
                    weights: weights.clone(),
                    bias: vec![0.5, -0.5],
                },
                Layer::Flatten,
            ],
        };
        net.validate().unwrap();
        let x = [0.7, -1.3, 2.2];
        let out = net.forward(&x);
        // TF "same": pad_left = (k - 1) / 2 = 1
        for t in 0..3 {
            for o in 0..2 {
                let mut acc = [0.5, -0.5][o];
                for j in 0..4 {
                    let s = t as i64 + j as i64 - 1;
                    if (0..3).contains(&s) {
                        acc += x[s as usize] * weights[j * 2 + o] as f64;
                    }
                }
                assert!((out[t * 2 + o] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn valid_padding_shrinks_sequence() {
        let mut net = build::stack(NetworkTag::Generic, 5, &[(3, 2)], &[1], vec![(0.0, 1.0); 5], false, 4);
        net.padding = Padding::Valid;
        // flatten now sees 4 x 3 values
        if let Layer::Dense { inputs, weights, .. } = &mut net.layers[2] {
            *inputs = 12;
            weights.truncate(12);
        }
        net.validate().unwrap();
        assert_eq!(net.forward(&[0.1, 0.2, 0.3, 0.4, 0.5]).len(), 1);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for net in [g_network(false, 3), f_network(7, false, 5)] {
            let p = dir.path().join("w.bin");
            save_weights(&net, &p).unwrap();
            let back = load_weights(&p).unwrap();
            assert_eq!(back, net);
            assert_eq!(back.to_bytes(), net.to_bytes());
        }
    }

    #[test]
    fn truncation_names_the_layer() {
        let bytes = g_network(false, 1).to_bytes();
        // cut inside the second conv kernel
        let header = 4 + 4 + 4 + 16 + 3 * 16 + 4;
        let first = 4 + 12 + 4 * (4 * 16 + 16);
        let cut = header + first + 40;
        match NetworkWeights::from_bytes(&bytes[..cut]) {
            Err(Error::Weights { layer, .. }) => assert_eq!(layer, Some(1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let mut bytes = f_network(3, false, 2).to_bytes();
        let n = bytes.len();
        bytes[n / 2] ^= 1;
        assert!(matches!(NetworkWeights::from_bytes(&bytes), Err(Error::Weights { .. })));
        let mut bytes = f_network(3, false, 2).to_bytes();
        bytes[4] = 9;
        let err = NetworkWeights::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        assert!(NetworkWeights::from_bytes(b"nope").is_err());
    }

    #[test]
    fn architecture_is_enforced() {
        let mut g = build::stack(NetworkTag::G, 3, &G_CONV, &[256, 128, 64, 7], vec![(0.0, 1.0); 3], true, 0);
        let err = g.validate().unwrap_err();
        assert!(matches!(err, Error::Weights { layer: Some(8), .. }), "{err}");
        g.tag = NetworkTag::Generic;
        g.k = 7;
        g.validate().unwrap();
        let mut f = f_network(4, true, 0);
        f.k = 5;
        assert!(f.validate().is_err());
        let mut bad = g_network(true, 0);
        if let Layer::Dense { weights, .. } = &mut bad.layers[5] {
            weights[0] = f32::NAN;
        }
        assert!(matches!(bad.validate(), Err(Error::Weights { layer: Some(5), .. })));
    }

    #[test]
    fn forward_g_is_lipschitz_in_x0() {
        let g = g_network(false, 11);
        let base = forward_g(&g, 0.3, 0.6, 2.0).unwrap().quote;
        let bumped = forward_g(&g, 0.3, 0.6, 2.0 + 1e-6).unwrap().quote;
        assert!((bumped - base).abs() <= 100.0 * 1e-6);
        let twice = forward_g(&g, 0.3, 0.6, 2.0).unwrap().quote;
        assert_eq!(base.to_bits(), twice.to_bits());
    }

    #[test]
    fn input_scaling_is_applied() {
        let mut net = dense_only(2, 1, vec![1.0, 1.0], vec![0.0], vec![(0.0, 2.0), (1.0, 3.0)]);
        net.scale_inputs = true;
        net.validate().unwrap();
        assert!((net.forward(&[1.0, 2.0])[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn loss_curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        let pts: Vec<LossPoint> = (1..=3)
            .map(|e| LossPoint {
                epoch: e,
                loss: 1.0 / e as f64,
                metric: Some(0.5 / e as f64),
            })
            .collect();
        write_loss_curve(&p, Some("mae"), &pts).unwrap();
        let (m, back) = read_loss_curve(&p).unwrap();
        assert_eq!(m.as_deref(), Some("mae"));
        assert_eq!(back, pts);
        std::fs::write(&p, "epoch,loss\n1,abc\n").unwrap();
        assert!(read_loss_curve(&p).is_err());
    }
}
