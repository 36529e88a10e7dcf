//! Binary network format, little-endian:
//!
//! ```text
//! magic "RLQN" | version u32 | layer count u32
//! per layer: inputs u32 | outputs u32 | activation u8 | weights f64* | bias f64*
//! ```
//!
//! Parameters are stored as raw IEEE-754 bits, so a round trip is exact.

use std::io::{Read, Write};

use super::{Activation, Layer, Network};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RLQN";
const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_network<W: Write>(w: &mut W, net: &Network) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    write_u32(w, VERSION)?;
    write_u32(w, net.layers.len() as u32)?;
    for l in &net.layers {
        write_u32(w, l.inputs as u32)?;
        write_u32(w, l.outputs as u32)?;
        w.write_all(&[l.activation.code()]).map_err(io_err)?;
        for &p in l.weights.iter().chain(&l.bias) {
            write_f64(w, p)?;
        }
    }
    Ok(())
}

pub fn read_network<R: Read>(r: &mut R) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a network checkpoint".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let inputs = read_u32(r)? as usize;
        let outputs = read_u32(r)? as usize;
        let mut code = [0u8; 1];
        r.read_exact(&mut code).map_err(io_err)?;
        let activation = Activation::from_code(code[0])
            .ok_or_else(|| Error::Checkpoint(format!("unknown activation code {}", code[0])))?;
        let weights = (0..inputs * outputs).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let bias = (0..outputs).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        layers.push(Layer::new(inputs, outputs, weights, bias, activation)?);
    }
    Network::from_layers(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::mlp(&[5, 7, 3], Activation::Relu, Activation::Sigmoid, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();
        let back = read_network(&mut buf.as_slice()).unwrap();
        assert_eq!(back, net);
        let bits = |n: &Network| n.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&net));
    }

    #[test]
    fn truncated_input_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::mlp(&[2, 2], Activation::Relu, Activation::Relu, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_network(&mut buf, &net).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_network(&mut buf.as_slice()), Err(Error::Checkpoint(_))));
    }
}
