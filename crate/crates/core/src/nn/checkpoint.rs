//! Versioned little-endian binary checkpoints.
//!
//! ```text
//! magic    "NDPCKP"            6 bytes
//! version  u16                 currently 1
//! meta     u32 len + UTF-8     free-form (JSON by convention)
//! count    u32
//! tensor*  u16 name len + name, u8 rank, u32 dims[rank], f64 data[prod(dims)]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{NdpError, Result};
use crate::nn::mlp::{Mlp, MlpSpec};

const MAGIC: &[u8; 6] = b"NDPCKP";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(NdpError::Shape(format!("tensor {name}: shape {shape:?} vs {} values", data.len())));
        }
        Ok(Self { name, shape, data })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| NdpError::Format(format!("missing tensor {name}")))
    }

    /// Store a network as one weight and one bias tensor per layer, with its
    /// spec under `<prefix>.spec` in the metadata object.
    pub fn push_mlp(&mut self, prefix: &str, mlp: &Mlp) -> Result<()> {
        let spec = mlp.spec();
        let mut dims = vec![spec.input_dim];
        dims.extend(&spec.hidden_dims);
        dims.push(spec.output_dim);
        let mut offset = 0;
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let params = mlp.params();
            self.tensors.push(Tensor::new(
                format!("{prefix}.{l}.weight"),
                vec![fan_out, fan_in],
                params[offset..offset + fan_in * fan_out].to_vec(),
            )?);
            offset += fan_in * fan_out;
            self.tensors.push(Tensor::new(
                format!("{prefix}.{l}.bias"),
                vec![fan_out],
                params[offset..offset + fan_out].to_vec(),
            )?);
            offset += fan_out;
        }
        let mut meta: serde_json::Map<String, serde_json::Value> = if self.meta.is_empty() {
            serde_json::Map::new()
        } else {
            serde_json::from_str(&self.meta)?
        };
        meta.insert(format!("{prefix}.spec"), serde_json::to_value(spec)?);
        self.meta = serde_json::to_string(&meta)?;
        Ok(())
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp> {
        let meta: serde_json::Value = serde_json::from_str(&self.meta)?;
        let spec: MlpSpec = serde_json::from_value(
            meta.get(format!("{prefix}.spec"))
                .cloned()
                .ok_or_else(|| NdpError::Format(format!("no spec for {prefix}")))?,
        )?;
        let layers = spec.hidden_dims.len() + 1;
        let mut params = Vec::with_capacity(spec.num_params());
        for l in 0..layers {
            params.extend(&self.get(&format!("{prefix}.{l}.weight"))?.data);
            params.extend(&self.get(&format!("{prefix}.{l}.bias"))?.data);
        }
        Mlp::from_params(spec, params)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        out.write_all(self.meta.as_bytes())?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            out.write_all(&(t.name.len() as u16).to_le_bytes())?;
            out.write_all(t.name.as_bytes())?;
            out.write_all(&[t.shape.len() as u8])?;
            for &d in &t.shape {
                out.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in &t.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NdpError::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut input)?);
        if version != VERSION {
            return Err(NdpError::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let meta = read_string(&mut input, meta_len)?;
        let count = u32::from_le_bytes(read_array(&mut input)?);
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(read_array(&mut input)?) as usize;
            let name = read_string(&mut input, name_len)?;
            let [rank] = read_array::<1, _>(&mut input)?;
            let shape = (0..rank)
                .map(|_| read_array(&mut input).map(|b| u32::from_le_bytes(b) as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = shape.iter().product::<usize>();
            let data = (0..len).map(|_| read_array(&mut input).map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
            tensors.push(Tensor { name, shape, data });
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_string<R: Read>(input: &mut R, len: usize) -> Result<String> {
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| NdpError::Format(e.to_string()))
}
