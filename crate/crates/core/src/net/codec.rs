//! Parameter file format, shared with the transport wire protocol.
//!
//! ```text
//! "MMNP"              4 bytes magic
//! version             u32 LE (currently 1)
//! layer count         u32 LE
//! per layer:
//!   kind tag          u8   (1 dense, 2 conv2d, 3 instance norm, 4 layer norm, 5 elu, 6 tanh)
//!   dims              u32 LE each (dense: in, out; conv2d: in_ch, out_ch, kernel, stride;
//!                     norms: width/channels; activations: none)
//!   values            f64 LE, weight (or scale) tensor then bias (or shift) tensor, row-major
//! ```

use super::layer::LayerSpec;
use super::network::{LayerParams, NetworkParams};
use super::tensor::Tensor;
use super::NetError;

pub const PARAMS_MAGIC: &[u8; 4] = b"MMNP";
pub const PARAMS_VERSION: u32 = 1;

pub fn serialize_params(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + params.param_count() * 8 + params.layers.len() * 17);
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        out.push(layer.spec.tag());
        for d in layer.spec.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for t in &layer.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NetError> {
        if self.bytes.len() - self.pos < n {
            return Err(NetError::Decode { offset: self.pos, reason: format!("truncated {what}") });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn deserialize_params(bytes: &[u8]) -> Result<NetworkParams, NetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != PARAMS_MAGIC {
        return Err(NetError::Decode { offset: 0, reason: "bad magic".into() });
    }
    let version = r.u32("version")?;
    if version != PARAMS_VERSION {
        return Err(NetError::Decode { offset: 4, reason: format!("unsupported version {version}") });
    }
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let tag_offset = r.pos;
        let tag = r.take(1, "layer tag")?[0];
        let n_dims = LayerSpec::dim_count(tag)
            .ok_or_else(|| NetError::Decode { offset: tag_offset, reason: format!("unknown layer tag {tag}") })?;
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(r.u32("layer dims")? as usize);
        }
        let spec = LayerSpec::from_tag(tag, &dims)
            .ok_or_else(|| NetError::Decode { offset: tag_offset, reason: format!("invalid dims {dims:?}") })?;
        let mut tensors = Vec::new();
        for shape in spec.param_shapes() {
            let n: usize = shape.iter().product();
            let start = r.pos;
            let byte_len = n
                .checked_mul(8)
                .ok_or_else(|| NetError::Decode { offset: start, reason: "tensor size overflow".into() })?;
            let raw = r.take(byte_len, "tensor values")?;
            let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let t = Tensor::new(shape, data).map_err(|e| NetError::Decode { offset: start, reason: e.to_string() })?;
            tensors.push(t);
        }
        layers.push(LayerParams { spec, tensors });
    }
    if r.pos != bytes.len() {
        return Err(NetError::Decode { offset: r.pos, reason: "trailing bytes".into() });
    }
    Ok(NetworkParams { layers })
}
