use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::{Network, Norm};
use super::spec::ModelSpec;
use super::train::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"DAEMENET";
const VERSION: u32 = 1;

/// JSON sidecar stored next to the parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub seed: u64,
    pub param_count: usize,
    pub train: Option<TrainConfig>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Binary layout (little endian): magic, version u32, arch tag u8, input dim
/// u32, output dim u32, seed u64, parameter count u64, norm flag u8, the
/// parameters as f64, then input mean/scale and output mean/scale if flagged.
pub fn save_checkpoint(net: &Network, path: &Path, train: Option<&TrainConfig>) -> Result<()> {
    let spec = net.spec();
    let mut buf = Vec::with_capacity(48 + 8 * net.param_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(spec.arch.tag());
    buf.extend_from_slice(&(spec.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(spec.output_dim as u32).to_le_bytes());
    buf.extend_from_slice(&net.seed().to_le_bytes());
    buf.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    let norms = match net.norms() {
        (Some(i), Some(o)) => Some((i, o)),
        _ => None,
    };
    buf.push(u8::from(norms.is_some()));
    let mut put = |vals: &[f64]| {
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    put(net.params());
    if let Some((i, o)) = norms {
        put(&i.mean);
        put(&i.scale);
        put(&o.mean);
        put(&o.scale);
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let meta = CheckpointMeta { spec: spec.clone(), seed: net.seed(), param_count: net.param_count(), train: train.cloned() };
    let side = sidecar(path);
    fs::write(&side, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(side, e))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::invalid("checkpoint is truncated"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, CheckpointMeta)> {
    let side = sidecar(path);
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)?;
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::invalid(format!("{} is not a model checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let tag = r.take(1)?[0];
    let (i, o) = (r.u32()? as usize, r.u32()? as usize);
    let seed = r.u64()?;
    let count = r.u64()? as usize;
    let has_norm = r.take(1)?[0] == 1;
    let spec = &meta.spec;
    if tag != spec.arch.tag() || i != spec.input_dim || o != spec.output_dim || count != meta.param_count || seed != meta.seed {
        return Err(Error::invalid("checkpoint header disagrees with its sidecar"));
    }
    let mut net = Network::new(spec.clone(), seed)?;
    if net.param_count() != count {
        return Err(Error::invalid("checkpoint parameter count does not match the architecture"));
    }
    let params = r.f64s(count)?;
    net.params_mut().copy_from_slice(&params);
    net.clear_norms();
    if has_norm {
        let input = Norm { mean: r.f64s(i)?, scale: r.f64s(i)? };
        let output = Norm { mean: r.f64s(o)?, scale: r.f64s(o)? };
        net.set_norms(input, output)?;
    }
    if r.at != buf.len() {
        return Err(Error::invalid("trailing bytes in checkpoint"));
    }
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{train, Architecture};
    use ndarray::Array2;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let spec = ModelSpec::new(Architecture::Blstm { layers: 1, cells: 3 }, 4, 2).unwrap();
        let mut net = Network::new(spec, 11).unwrap();
        let data = vec![(Array2::from_shape_fn((5, 4), |(a, b)| (a + b) as f64), Array2::from_elem((5, 2), 1.0))];
        let cfg = TrainConfig { epochs: 2, ..Default::default() };
        train(&mut net, &data, &cfg).unwrap();
        save_checkpoint(&net, &path, Some(&cfg)).unwrap();
        let (back, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(meta.train, Some(cfg));
        let raw = fs::read(&path).unwrap();
        assert_eq!(&raw[..8], MAGIC);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let net = Network::new(ModelSpec::new(Architecture::Linear, 2, 2).unwrap(), 0).unwrap();
        save_checkpoint(&net, &path, None).unwrap();
        let raw = fs::read(&path).unwrap();
        fs::write(&path, &raw[..raw.len() - 3]).unwrap();
        assert!(load_checkpoint(&path).is_err());
        let mut bad = raw.clone();
        bad[0] = b'X';
        fs::write(&path, &bad).unwrap();
        assert!(load_checkpoint(&path).is_err());
        assert!(load_checkpoint(&dir.path().join("missing.bin")).is_err());
    }
}
