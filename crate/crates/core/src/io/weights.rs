//! Model file: a text manifest followed by a little-endian `f32` blob.
//!
//! ```text
//! ARSR-WEIGHTS
//! version = 1
//! form = collapsed
//! n_feat = 3
//! ...
//! conv.0 = out=16 in_per_group=1 kernel=7 groups=1 offset=0 len=800
//! wquant.0 = bits=12 scale=0.0001 pow2=false      (quantized files only)
//! act.input = bits=12 scale=0.0004 pow2=false     (quantized files only)
//! blob_bytes = 149504
//! end
//! <blob>
//! ```
//!
//! Expanded layers list `conv.<i>.wide` then `conv.<i>.project`. Each conv
//! stores its kernels then its bias; `offset` is in bytes from the start of
//! the blob and `len` counts floats. Serialisation is canonical: writing what
//! was read reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{format_err, Error, Result};
use crate::model::{Form, Layer, ModelConfig, Tap, WeightSet};
use crate::pipeline::{NetWeights, Network};
use crate::quant::{QuantParams, QuantizedModel};
use crate::scalar::Scalar;
use crate::tensor::ConvWeights;

pub const MAGIC: &str = "ARSR-WEIGHTS";
pub const VERSION: u32 = 1;

fn tap_key(tap: Tap) -> String {
    match tap {
        Tap::Input => "input".into(),
        Tap::Residual => "residual".into(),
        Tap::Layer(i) => format!("layer.{i}"),
        Tap::Wide(i) => format!("wide.{i}"),
    }
}

fn parse_tap(s: &str) -> Result<Tap> {
    match s {
        "input" => Ok(Tap::Input),
        "residual" => Ok(Tap::Residual),
        _ => s
            .strip_prefix("layer.")
            .and_then(|i| i.parse().ok())
            .map(Tap::Layer)
            .ok_or_else(|| format_err!("unknown activation tap `{s}`")),
    }
}

fn conv_names(layer: &Layer<impl Scalar>, i: usize) -> Vec<String> {
    match layer {
        Layer::Collapsed(_) => vec![format!("conv.{i}")],
        Layer::Expanded { .. } => vec![format!("conv.{i}.wide"), format!("conv.{i}.project")],
    }
}

fn quant_entry<T: Scalar>(q: &QuantParams<T>) -> String {
    format!("bits={} scale={} pow2={}", q.bits, q.scale.as_f64(), q.pow2)
}

/// Serialises a model to its canonical byte form.
pub fn to_bytes<T: Scalar>(net: &Network<T>) -> Result<Vec<u8>> {
    let cfg = &net.cfg;
    let weights = match &net.weights {
        NetWeights::Float(w) => w,
        NetWeights::Quantized(q) => &q.weights,
    };
    weights.validate(cfg)?;
    let mut m = String::new();
    let kernels = cfg.feat_kernels.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let _ = writeln!(m, "{MAGIC}");
    let _ = writeln!(m, "version = {VERSION}");
    let _ = writeln!(m, "form = {}", weights.form);
    let _ = writeln!(m, "n_feat = {}", cfg.n_feat);
    let _ = writeln!(m, "n_map = {}", cfg.n_map);
    let _ = writeln!(m, "channels = {}", cfg.channels);
    let _ = writeln!(m, "expansion = {}", cfg.expansion);
    let _ = writeln!(m, "feat_kernels = {kernels}");
    let _ = writeln!(m, "map_kernel = {}", cfg.map_kernel);
    let _ = writeln!(m, "groups = {}", cfg.groups);
    let _ = writeln!(m, "scale = {}", cfg.scale);
    let _ = writeln!(m, "final_kernel = {}", cfg.final_kernel);

    let mut blob = Vec::new();
    for (i, layer) in weights.layers.iter().enumerate() {
        for (name, c) in conv_names(layer, i).into_iter().zip(layer.convs()) {
            let len = c.kernels.len() + c.bias.len();
            let _ = writeln!(
                m,
                "{name} = out={} in_per_group={} kernel={} groups={} offset={} len={len}",
                c.out_channels,
                c.in_per_group,
                c.kernel,
                c.groups,
                blob.len()
            );
            for v in c.kernels.iter().chain(&c.bias) {
                blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    if let NetWeights::Quantized(q) = &net.weights {
        for (i, p) in q.weight_params.iter().enumerate() {
            let _ = writeln!(m, "wquant.{i} = {}", quant_entry(p));
        }
        for (tap, p) in &q.activations {
            let _ = writeln!(m, "act.{} = {}", tap_key(*tap), quant_entry(p));
        }
    }
    let _ = writeln!(m, "blob_bytes = {}", blob.len());
    let _ = writeln!(m, "end");
    let mut out = m.into_bytes();
    out.extend_from_slice(&blob);
    Ok(out)
}

/// Splits a model file into manifest text and blob.
pub fn split(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let marker = b"\nend\n";
    let pos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| format_err!("model manifest has no `end` line"))?;
    let text = std::str::from_utf8(&bytes[..pos + 1]).map_err(|_| format_err!("manifest is not UTF-8"))?;
    Ok((text, &bytes[pos + marker.len()..]))
}

struct Manifest<'a> {
    entries: BTreeMap<&'a str, &'a str>,
}

impl<'a> Manifest<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(format_err!("not a model file (missing {MAGIC} header)"));
        }
        let mut entries = BTreeMap::new();
        for line in lines {
            let (k, v) = line.split_once(" = ").ok_or_else(|| format_err!("malformed manifest line `{line}`"))?;
            if entries.insert(k, v).is_some() {
                return Err(format_err!("duplicate manifest key `{k}`"));
            }
        }
        Ok(Self { entries })
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.entries.get(key).copied().ok_or_else(|| format_err!("manifest is missing `{key}`"))
    }

    fn num<N: std::str::FromStr>(&self, key: &str) -> Result<N> {
        let v = self.get(key)?;
        v.parse().map_err(|_| format_err!("manifest `{key}` has bad value `{v}`"))
    }
}

/// `k=v k=v ...` fields of a conv or quant entry.
fn fields(s: &str) -> Result<BTreeMap<&str, &str>> {
    s.split_whitespace().map(|kv| kv.split_once('=').ok_or_else(|| format_err!("malformed field `{kv}`"))).collect()
}

fn field<N: std::str::FromStr>(f: &BTreeMap<&str, &str>, key: &str) -> Result<N> {
    f.get(key).and_then(|v| v.parse().ok()).ok_or_else(|| format_err!("missing or bad field `{key}`"))
}

fn read_quant<T: Scalar>(s: &str) -> Result<QuantParams<T>> {
    let f = fields(s)?;
    let scale: f64 = field(&f, "scale")?;
    QuantParams::new(field(&f, "bits")?, T::lit(scale), field(&f, "pow2")?)
        .map_err(|e| format_err!("bad quant entry `{s}`: {e}"))
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let (text, blob) = split(bytes)?;
    let m = Manifest::parse(text)?;
    let version: u32 = m.num("version")?;
    if version != VERSION {
        return Err(format_err!("unsupported model file version {version} (expected {VERSION})"));
    }
    let form: Form = m.get("form")?.parse()?;
    let feat_kernels = m
        .get("feat_kernels")?
        .split(',')
        .map(|k| k.parse().map_err(|_| format_err!("bad feat_kernels entry `{k}`")))
        .collect::<Result<Vec<usize>>>()?;
    let cfg = ModelConfig {
        n_feat: m.num("n_feat")?,
        n_map: m.num("n_map")?,
        channels: m.num("channels")?,
        expansion: m.num("expansion")?,
        feat_kernels,
        map_kernel: m.num("map_kernel")?,
        groups: m.num("groups")?,
        scale: m.num("scale")?,
        final_kernel: m.num("final_kernel")?,
    };
    cfg.validate().map_err(|e| format_err!("manifest config: {e}"))?;
    let blob_bytes: usize = m.num("blob_bytes")?;
    if blob.len() != blob_bytes {
        return Err(format_err!("blob is {} bytes, manifest says {blob_bytes}", blob.len()));
    }

    let template = WeightSet::<T>::zeros(&cfg, form)?;
    let mut layers = Vec::with_capacity(template.layers.len());
    let mut expected_offset = 0;
    for (i, tl) in template.layers.iter().enumerate() {
        let mut convs = Vec::new();
        for (name, tc) in conv_names(tl, i).into_iter().zip(tl.convs()) {
            let f = fields(m.get(&name)?)?;
            let (offset, len): (usize, usize) = (field(&f, "offset")?, field(&f, "len")?);
            let geometry: [usize; 4] =
                [field(&f, "out")?, field(&f, "in_per_group")?, field(&f, "kernel")?, field(&f, "groups")?];
            if geometry != [tc.out_channels, tc.in_per_group, tc.kernel, tc.groups]
                || len != tc.param_count()
                || offset != expected_offset
            {
                return Err(format_err!("`{name}` does not match the shape implied by the config"));
            }
            expected_offset += len * 4;
            let values: Vec<T> = blob
                .get(offset..offset + len * 4)
                .ok_or_else(|| format_err!("`{name}` runs past the end of the blob"))?
                .chunks_exact(4)
                .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
                .collect();
            let nk = tc.kernels.len();
            convs.push(ConvWeights::new(
                tc.out_channels,
                tc.in_per_group,
                tc.kernel,
                tc.groups,
                values[..nk].to_vec(),
                values[nk..].to_vec(),
            )?);
        }
        let mut it = convs.into_iter();
        layers.push(match form {
            Form::Collapsed => Layer::Collapsed(it.next().expect("one conv")),
            Form::Expanded => {
                Layer::Expanded { wide: it.next().expect("wide conv"), project: it.next().expect("project conv") }
            }
        });
    }
    if expected_offset != blob_bytes {
        return Err(format_err!("blob has {} unreferenced bytes", blob_bytes - expected_offset));
    }
    let weights = WeightSet { form, layers };

    let quantized = m.entries.keys().any(|k| k.starts_with("wquant.") || k.starts_with("act."));
    if !quantized {
        return Network::float(cfg, weights);
    }
    if form != Form::Collapsed {
        return Err(format_err!("quantized model files must hold collapsed weights"));
    }
    let weight_params =
        (0..cfg.layer_count()).map(|i| read_quant(m.get(&format!("wquant.{i}"))?)).collect::<Result<Vec<_>>>()?;
    let mut activations = Vec::new();
    for tap in crate::quant::activation_taps(&cfg) {
        activations.push((tap, read_quant(m.get(&format!("act.{}", tap_key(tap)))?)?));
    }
    for key in m.entries.keys().filter_map(|k| k.strip_prefix("act.")) {
        parse_tap(key)?;
    }
    Network::quantized(cfg, QuantizedModel { weights, weight_params, activations })
}

pub fn write_model<T: Scalar>(path: impl AsRef<Path>, net: &Network<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net)?).map_err(|e| Error::from(e).at(path))?;
    Ok(())
}

pub fn read_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    from_bytes(&bytes).map_err(|e| e.at(path))
}

/// The manifest text of a model file, for display.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    Ok(split(&bytes)?.0.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::quantize_model;
    use crate::tensor::Shape;
    use crate::testutil::rand_tensor;

    fn small() -> ModelConfig {
        ModelConfig::new(2, 2, 2, 3).with_channels(4, 8)
    }

    #[test]
    fn float_roundtrip_is_canonical() {
        let cfg = small();
        for form in [Form::Expanded, Form::Collapsed] {
            let w = WeightSet::<f32>::init(&cfg, form, 5).unwrap();
            let bytes = to_bytes(&Network::float(cfg.clone(), w.clone()).unwrap()).unwrap();
            let back: Network<f32> = from_bytes(&bytes).unwrap();
            assert_eq!(back.cfg, cfg);
            let NetWeights::Float(bw) = &back.weights else { panic!("float expected") };
            assert_eq!(bw, &w);
            assert_eq!(to_bytes(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn quantized_roundtrip_is_canonical() {
        let cfg = small();
        let w = WeightSet::<f32>::init(&cfg, Form::Collapsed, 6).unwrap();
        let calib = vec![rand_tensor::<f32>(Shape::new(1, 1, 8, 8), 1)];
        for pow2 in [false, true] {
            let q = quantize_model(&w, &cfg, 12, pow2, &calib).unwrap();
            let bytes = to_bytes(&Network::quantized(cfg.clone(), q.clone()).unwrap()).unwrap();
            let back: Network<f32> = from_bytes(&bytes).unwrap();
            let NetWeights::Quantized(bq) = &back.weights else { panic!("quantized expected") };
            assert_eq!(bq, &q);
            assert_eq!(to_bytes(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn rejects_unknown_version_and_truncation() {
        let cfg = small();
        let w = WeightSet::<f32>::init(&cfg, Form::Collapsed, 5).unwrap();
        let bytes = to_bytes(&Network::float(cfg, w).unwrap()).unwrap();
        let (text, blob) = split(&bytes).unwrap();
        let text = text.replacen("version = 1", "version = 2", 1);
        let bumped = [text.as_bytes(), b"end\n", blob].concat();
        assert!(matches!(from_bytes::<f32>(&bumped), Err(Error::Format(_))));
        assert!(matches!(from_bytes::<f32>(&bytes[..bytes.len() - 4]), Err(Error::Format(_))));
        assert!(matches!(from_bytes::<f32>(b"hello\nend\n"), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_shape_tampering() {
        let cfg = small();
        let w = WeightSet::<f32>::init(&cfg, Form::Collapsed, 5).unwrap();
        let bytes = to_bytes(&Network::float(cfg, w).unwrap()).unwrap();
        let (text, blob) = split(&bytes).unwrap();
        let text = text.replacen("groups = 2", "groups = 1", 1);
        let tampered = [text.as_bytes(), b"end\n", blob].concat();
        assert!(matches!(from_bytes::<f32>(&tampered), Err(Error::Format(_))));
    }
}
