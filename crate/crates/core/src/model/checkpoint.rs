//! Model checkpoint: magic "RLQM", version u32, normalization u8, then the
//! three networks in `nn` checkpoint format (init, transition, observed).

use std::io::{Read, Write};
use std::path::Path;

use super::{Normalization, RepresentationModel};
use crate::error::{Error, Result};
use crate::nn::{read_network, write_network};

const MAGIC: &[u8; 4] = b"RLQM";
const VERSION: u32 = 1;

pub fn write_model<W: Write>(w: &mut W, model: &RepresentationModel) -> Result<()> {
    let err = |e: std::io::Error| Error::Checkpoint(e.to_string());
    w.write_all(MAGIC).map_err(err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(err)?;
    w.write_all(&[model.normalization.code()]).map_err(err)?;
    for net in model.networks() {
        write_network(w, net)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<RepresentationModel> {
    let err = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let mut head = [0u8; 9];
    r.read_exact(&mut head).map_err(err)?;
    if &head[..4] != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let normalization = Normalization::from_code(head[8])
        .ok_or_else(|| Error::Checkpoint(format!("unknown normalization code {}", head[8])))?;
    let nn_init = read_network(r)?;
    let nn_st = read_network(r)?;
    let nn_observed = read_network(r)?;
    RepresentationModel::from_networks(nn_init, nn_st, nn_observed, normalization)
}

impl RepresentationModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        write_model(&mut buf, self)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        read_model(&mut bytes.as_slice())
    }
}
