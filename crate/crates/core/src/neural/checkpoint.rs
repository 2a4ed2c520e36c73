//! Flat binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! bundle  := "CRLCKPT1" u32:count network*count
//! network := "CRLNET01" u32:layers u64:size*(layers+1) u8:activation*layers
//!            u8:layer_norm u64:param_count f64:param*param_count
//! ```
//!
//! Activation codes: 0 tanh, 1 relu, 2 identity. Parameters are written in the
//! network's flat order (per layer: weights row-major, bias, then the
//! layer-norm gain and shift after the first layer when present).

use std::path::Path;

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const BUNDLE_MAGIC: &[u8; 8] = b"CRLCKPT1";
const NET_MAGIC: &[u8; 8] = b"CRLNET01";

pub fn encode_network<T: Scalar>(net: &Mlp<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(NET_MAGIC);
    out.extend_from_slice(&(net.activations().len() as u32).to_le_bytes());
    for &s in net.sizes() {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    for a in net.activations() {
        out.push(a.code());
    }
    out.push(u8::from(net.layer_norm()));
    out.extend_from_slice(&(net.num_params() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_f64_lossy().to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Model("checkpoint truncated".into()));
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

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_network<T: Scalar>(r: &mut Reader<'_>) -> Result<Mlp<T>> {
    if r.take(8)? != NET_MAGIC {
        return Err(Error::Model("bad network magic".into()));
    }
    let layers = r.u32()? as usize;
    let sizes = (0..=layers).map(|_| r.u64().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    let acts = (0..layers)
        .map(|_| {
            let c = r.u8()?;
            Activation::from_code(c).ok_or_else(|| Error::Model(format!("unknown activation code {c}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let layer_norm = r.u8()? != 0;
    let mut net = Mlp::zeros(&sizes, &acts, layer_norm)?;
    let count = r.u64()? as usize;
    if count != net.num_params() {
        return Err(Error::Model(format!("header declares {count} parameters, shape needs {}", net.num_params())));
    }
    for p in net.params_mut() {
        *p = T::lit(r.f64()?);
    }
    Ok(net)
}

pub fn encode_bundle<T: Scalar>(nets: &[&Mlp<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for n in nets {
        encode_network(n, &mut out);
    }
    out
}

pub fn decode_bundle<T: Scalar>(bytes: &[u8]) -> Result<Vec<Mlp<T>>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != BUNDLE_MAGIC {
        return Err(Error::Model("bad checkpoint magic".into()));
    }
    let count = r.u32()? as usize;
    let nets = (0..count).map(|_| decode_network(&mut r)).collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Model("trailing bytes after checkpoint".into()));
    }
    Ok(nets)
}

pub fn save_bundle<T: Scalar>(path: &Path, nets: &[&Mlp<T>]) -> Result<()> {
    std::fs::write(path, encode_bundle(nets))?;
    Ok(())
}

pub fn load_bundle<T: Scalar>(path: &Path) -> Result<Vec<Mlp<T>>> {
    decode_bundle(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bytes_reload_to_identical_behavior() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Mlp::<f32>::new(&[4, 7, 3], &[Activation::Tanh, Activation::Identity], true, &mut rng).unwrap();
        let b = Mlp::<f32>::new(&[5, 2], &[Activation::Relu], false, &mut rng).unwrap();
        let bytes = encode_bundle(&[&a, &b]);
        let back = decode_bundle::<f32>(&bytes).unwrap();
        assert_eq!(back, vec![a.clone(), b]);
        assert_eq!(encode_bundle(&[&back[0], &back[1]]), bytes);
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(a.predict(&x).unwrap(), back[0].predict(&x).unwrap());
    }

    #[test]
    fn header_layout_is_documented() {
        let net = Mlp::<f64>::zeros(&[2, 1], &[Activation::Identity], false).unwrap();
        let bytes = encode_bundle(&[&net]);
        assert_eq!(&bytes[..8], b"CRLCKPT1");
        assert_eq!(&bytes[12..20], b"CRLNET01");
        // 8 + 4 + 8 + 4 + 2*8 + 1 + 1 + 8 + 3*8
        assert_eq!(bytes.len(), 74);
    }

    #[test]
    fn corrupted_input_rejected() {
        let net = Mlp::<f64>::zeros(&[2, 1], &[Activation::Identity], false).unwrap();
        let mut bytes = encode_bundle(&[&net]);
        assert!(decode_bundle::<f64>(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_bundle::<f64>(&bytes).is_err());
    }
}
