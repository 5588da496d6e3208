//! On-disk network container: a JSON header describing the layers followed by
//! length-prefixed little-endian `f64` blocks for current and initial
//! parameters. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::{Activation, ConvLayer, DenseLayer, Layer, Network, ParamSnapshot};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NWC1";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    seed: u64,
    class_count: usize,
    input_shape: Vec<usize>,
    has_init: bool,
    layers: Vec<LayerDescriptor>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerDescriptor {
    Dense {
        n_in: usize,
        n_out: usize,
        bias: bool,
        activation: Activation,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        activation: Activation,
    },
    Flatten,
}

pub(crate) fn write_f64_block(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) struct BlockReader<'a> {
    bytes: &'a [u8],
    pub offset: usize,
}

impl<'a> BlockReader<'a> {
    pub fn new(bytes: &'a [u8], offset: usize) -> Self {
        Self { bytes, offset }
    }

    fn err(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.offset,
            message: message.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    pub fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn read_f64_block(&mut self) -> Result<Vec<f64>> {
        let len = u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize;
        if len > (self.bytes.len() - self.offset) / 8 {
            return Err(self.err("block length exceeds file size"));
        }
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(f64::from_le_bytes(self.take(8)?.try_into().unwrap()));
        }
        Ok(out)
    }

    pub fn at_end(&self) -> bool {
        self.offset == self.bytes.len()
    }
}

/// Serialize a network, including its initialization snapshot when present.
pub fn network_to_bytes(net: &Network) -> Result<Vec<u8>> {
    let has_init = net.has_init_snapshot();
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerDescriptor::Dense {
                n_in: d.n_in,
                n_out: d.n_out,
                bias: d.bias.is_some(),
                activation: d.activation,
            },
            Layer::Conv2d(c) => LayerDescriptor::Conv2d {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                kh: c.kh,
                kw: c.kw,
                stride: c.stride,
                padding: c.padding,
                bias: c.bias.is_some(),
                activation: c.activation,
            },
            Layer::Flatten => LayerDescriptor::Flatten,
        })
        .collect();
    let header = Header {
        version: VERSION,
        seed: net.seed(),
        class_count: net.class_count(),
        input_shape: net.input_shape().to_vec(),
        has_init,
        layers,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (i, layer) in net.layers().iter().enumerate() {
        let (weight, bias) = match layer {
            Layer::Dense(d) => (&d.weight, &d.bias),
            Layer::Conv2d(c) => (&c.kernel, &c.bias),
            Layer::Flatten => continue,
        };
        write_f64_block(&mut out, weight);
        if let Some(b) = bias {
            write_f64_block(&mut out, b);
        }
        if has_init {
            let snap = net.init_snapshot(i).expect("snapshot present");
            write_f64_block(&mut out, &snap.weight);
            if let Some(b) = &snap.bias {
                write_f64_block(&mut out, b);
            }
        }
    }
    Ok(out)
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<Network> {
    let mut r = BlockReader::new(bytes, 0);
    if r.take(4)? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic; not a network container".into(),
        });
    }
    let header_len = r.read_u32()? as usize;
    let header_bytes = r.take(header_len)?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    if header.version != VERSION {
        return Err(Error::Parse {
            offset: 8,
            message: format!("unsupported version {}", header.version),
        });
    }

    let mut layers = Vec::with_capacity(header.layers.len());
    let mut init: Vec<Option<ParamSnapshot>> = Vec::with_capacity(header.layers.len());
    for desc in &header.layers {
        match desc {
            LayerDescriptor::Flatten => {
                layers.push(Layer::Flatten);
                init.push(None);
            }
            LayerDescriptor::Dense {
                n_in,
                n_out,
                bias,
                activation,
            } => {
                let weight = r.read_f64_block()?;
                let b = if *bias { Some(r.read_f64_block()?) } else { None };
                let snap = if header.has_init {
                    let w = r.read_f64_block()?;
                    let sb = if *bias { Some(r.read_f64_block()?) } else { None };
                    Some(ParamSnapshot { weight: w, bias: sb })
                } else {
                    None
                };
                layers.push(Layer::Dense(DenseLayer {
                    n_in: *n_in,
                    n_out: *n_out,
                    weight,
                    bias: b,
                    activation: *activation,
                }));
                init.push(snap);
            }
            LayerDescriptor::Conv2d {
                in_ch,
                out_ch,
                kh,
                kw,
                stride,
                padding,
                bias,
                activation,
            } => {
                let kernel = r.read_f64_block()?;
                let b = if *bias { Some(r.read_f64_block()?) } else { None };
                let snap = if header.has_init {
                    let w = r.read_f64_block()?;
                    let sb = if *bias { Some(r.read_f64_block()?) } else { None };
                    Some(ParamSnapshot { weight: w, bias: sb })
                } else {
                    None
                };
                layers.push(Layer::Conv2d(ConvLayer {
                    in_ch: *in_ch,
                    out_ch: *out_ch,
                    kh: *kh,
                    kw: *kw,
                    stride: *stride,
                    padding: *padding,
                    kernel,
                    bias: b,
                    activation: *activation,
                }));
                init.push(snap);
            }
        }
    }
    if !r.at_end() {
        return Err(Error::Parse {
            offset: r.offset,
            message: "trailing bytes after parameter blocks".into(),
        });
    }
    Network::from_parts(
        header.input_shape,
        layers,
        init,
        header.class_count,
        header.seed,
    )
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, network_to_bytes(net)?)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network> {
    network_from_bytes(&fs::read(path)?)
}

/// SHA-256 of a serialized network, for provenance stamps.
pub fn network_file_hash(net: &Network) -> Result<String> {
    let bytes = network_to_bytes(net)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{:02x}", b)).collect())
}
