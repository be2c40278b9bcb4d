//! Binary checkpoint: `SITENTCK`, version (u32 LE), header length (u64 LE),
//! JSON header, then every parameter as f64 LE in visit order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelParams, ModelVariant, TrainConfig};
use crate::corpus::SeLabel;
use crate::error::{Error, Result};
use crate::nncore::ParamSet;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SITENTCK";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    variant: ModelVariant,
    config: TrainConfig,
    labels: Vec<SeLabel>,
    epoch: usize,
    seed: u64,
    input_dim: usize,
    hidden: usize,
    mask_connectives: bool,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<W: Write>(ck: &Checkpoint, mut w: W) -> Result<()> {
    let params = &ck.model.params;
    let header = Header {
        variant: ck.model.variant,
        config: ck.config.clone(),
        labels: SeLabel::ALL.to_vec(),
        epoch: ck.epoch,
        seed: ck.config.seed,
        input_dim: ck.model.input_dim(),
        hidden: ck.model.hidden_dim(),
        mask_connectives: ck.model.mask_connectives,
        tensors: params
            .tensors()
            .into_iter()
            .map(|t| TensorEntry {
                name: t.name,
                shape: t.shape,
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in params.tensors() {
        for v in t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated file".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&json)?;
    if header.labels != SeLabel::ALL {
        return Err(Error::Checkpoint("label inventory differs".into()));
    }

    let mut params = ModelParams::zeros(header.variant, header.input_dim, header.hidden);
    let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
    let found: Vec<(String, Vec<usize>)> = header.tensors.into_iter().map(|t| (t.name, t.shape)).collect();
    if expected != found {
        return Err(Error::Checkpoint("tensor layout does not match variant and dimensions".into()));
    }
    let mut flat = vec![0.0; params.num_params()];
    for v in flat.iter_mut() {
        r.read_exact(&mut b8)
            .map_err(|_| Error::Checkpoint("truncated parameter data".into()))?;
        *v = f64::from_le_bytes(b8);
    }
    if r.read(&mut b8)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    params.assign_flat(&flat);
    Ok(Checkpoint {
        model: Model {
            variant: header.variant,
            params,
            mask_connectives: header.mask_connectives,
        },
        config: header.config,
        epoch: header.epoch,
    })
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        write_checkpoint(self, BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        read_checkpoint(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(variant: ModelVariant) -> Checkpoint {
        let config = TrainConfig {
            hidden: 3,
            seed: 11,
            mask_connectives: true,
            ..TrainConfig::default()
        };
        Checkpoint {
            model: Model::new(variant, 5, &config),
            config,
            epoch: 7,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for variant in ModelVariant::ALL {
            let ck = sample(variant);
            let mut buf = Vec::new();
            write_checkpoint(&ck, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            assert_eq!(back, ck);
            let a: Vec<u64> = ck.model.params.flatten().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u64> = back.model.params.flatten().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn version_mismatch_names_both() {
        let mut buf = Vec::new();
        write_checkpoint(&sample(ModelVariant::Paragraph), &mut buf).unwrap();
        buf[8..12].copy_from_slice(&9u32.to_le_bytes());
        let err = read_checkpoint(buf.as_slice()).unwrap_err();
        assert!(matches!(err, Error::CheckpointVersion { found: 9, supported: 1 }));
        let msg = err.to_string();
        assert!(msg.contains('9') && msg.contains('1'), "{msg}");
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_checkpoint(&sample(ModelVariant::ParagraphCrf), &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        buf.push(0);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ck");
        let ck = sample(ModelVariant::ClauseLevel);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
