//! Binary checkpoint files.
//!
//! Layout (little-endian): magic `PSNN`, version u16, network kind u8,
//! tensor count u32, then per tensor a u16 name length, UTF-8 name, u8 rank,
//! u32 dims and f32 values. Parameters come first under their qualified
//! names; seed, input width, counters and Adam moments follow as `meta.*`
//! and `adam.*` tensors. Integers are stored exactly as 16-bit chunks.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::adam::AdamState;
use super::{build_model_for, NetError, Network, NetworkKind, Tensor};

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"PSNN";

fn u64_tensor(v: u64) -> Tensor<f32> {
    Tensor::from_fn(&[4], |i| ((v >> (16 * i)) & 0xFFFF) as f32)
}

fn tensor_u64(t: &Tensor<f32>) -> Result<u64, NetError> {
    if t.len() != 4 {
        return Err(NetError::FormatError(
            "integer field must have 4 chunks".into(),
        ));
    }
    t.data().iter().enumerate().try_fold(0u64, |acc, (i, &c)| {
        if !(0.0..=65535.0).contains(&c) || c.fract() != 0.0 {
            return Err(NetError::FormatError("bad integer chunk".into()));
        }
        Ok(acc | ((c as u64) << (16 * i)))
    })
}

fn entries(net: &Network<f32>) -> Vec<(String, Tensor<f32>)> {
    let mut out: Vec<(String, Tensor<f32>)> = net
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    let joints = if matches!(net.kind, NetworkKind::Tpn | NetworkKind::Baseline) {
        net.input_shapes[0][1] as u64
    } else {
        17
    };
    let st = &net.state;
    out.push(("meta.seed".into(), u64_tensor(net.seed)));
    out.push(("meta.joints".into(), u64_tensor(joints)));
    out.push(("meta.epochs_done".into(), u64_tensor(st.epochs_done)));
    out.push(("meta.steps".into(), u64_tensor(st.steps)));
    if let Some(adam) = &st.adam {
        out.push(("adam.step".into(), u64_tensor(adam.step)));
        for (i, (m, v)) in adam.m.iter().zip(&adam.v).enumerate() {
            out.push((format!("adam.m.{i:03}"), m.clone()));
            out.push((format!("adam.v.{i:03}"), v.clone()));
        }
    }
    out
}

pub fn save_checkpoint(net: &Network<f32>, path: &Path) -> Result<(), NetError> {
    let tensors = entries(net);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(net.kind.code());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NetError::FormatError(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NetError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

fn parse(bytes: &[u8]) -> Result<(NetworkKind, Vec<(String, Tensor<f32>)>), NetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NetError::FormatError("bad magic".into()));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(NetError::FormatError(format!(
            "unsupported version {version}"
        )));
    }
    let code = r.u8()?;
    let kind = NetworkKind::from_code(code)
        .ok_or_else(|| NetError::FormatError(format!("unknown network kind code {code}")))?;
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NetError::FormatError("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| NetError::FormatError("tensor too large".into()))?;
        let raw = r.take(
            n.checked_mul(4)
                .ok_or_else(|| NetError::FormatError("tensor too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(dims, data)
            .map_err(|_| NetError::FormatError(format!("bad shape for {name}")))?;
        out.push((name, t));
    }
    if r.pos != bytes.len() {
        return Err(NetError::FormatError("trailing bytes".into()));
    }
    Ok((kind, out))
}

/// Loads a checkpoint, checking its kind when `expected` is given.
pub fn load_checkpoint(
    path: &Path,
    expected: Option<NetworkKind>,
) -> Result<Network<f32>, NetError> {
    let bytes = fs::read(path)?;
    let (kind, tensors) = parse(&bytes)?;
    if let Some(e) = expected.filter(|&e| e != kind) {
        return Err(NetError::KindMismatch {
            expected: e,
            found: kind,
        });
    }
    let find = |name: &str| {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NetError::FormatError(format!("missing {name}")))
    };
    let seed = tensor_u64(find("meta.seed")?)?;
    let joints = tensor_u64(find("meta.joints")?)? as usize;
    if joints == 0 || joints > 1024 {
        return Err(NetError::FormatError(format!("bad joint count {joints}")));
    }
    let mut net: Network<f32> = build_model_for(kind, seed, joints);
    for (name, t) in net.named_params_mut() {
        let src = find(&name)?;
        if src.shape() != t.shape() {
            return Err(NetError::FormatError(format!(
                "shape of {name} does not match"
            )));
        }
        *t = src.clone();
    }
    net.state.epochs_done = tensor_u64(find("meta.epochs_done")?)?;
    net.state.steps = tensor_u64(find("meta.steps")?)?;
    if let Ok(step) = find("adam.step") {
        let shapes: Vec<Vec<usize>> = net.trainable().iter().map(|t| t.shape().to_vec()).collect();
        let mut m = Vec::with_capacity(shapes.len());
        let mut v = Vec::with_capacity(shapes.len());
        for (i, s) in shapes.iter().enumerate() {
            for (prefix, dst) in [("m", &mut m), ("v", &mut v)] {
                let t = find(&format!("adam.{prefix}.{i:03}"))?;
                if t.shape() != s.as_slice() {
                    return Err(NetError::FormatError(format!("adam.{prefix}.{i:03} shape")));
                }
                dst.push(t.clone());
            }
        }
        net.state.adam = Some(AdamState {
            step: tensor_u64(step)?,
            m,
            v,
        });
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{build_model, train, Hyperparams, TensorDataset};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for kind in NetworkKind::ALL {
            let net = build_model(kind, 42);
            let p = dir.path().join(format!("{kind}.ckpt"));
            save_checkpoint(&net, &p).unwrap();
            assert_eq!(load_checkpoint(&p, Some(kind)).unwrap(), net);
        }
    }

    #[test]
    fn trained_state_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let x = Tensor::from_fn(&[4, 10, 17, 3], |i| (i % 11) as f32 / 11.0);
        let y = Tensor::from_fn(&[4, 80, 28], |i| (i % 3) as f32 / 3.0);
        let data = TensorDataset::new(vec![x], y).unwrap();
        let hyper = Hyperparams {
            batch_size: 2,
            epochs: 2,
            ..Hyperparams::default()
        };
        let (net, _) = train(build_model(NetworkKind::Tpn, 3), &data, None, &hyper).unwrap();
        assert!(net.train_state().adam.is_some());
        let p = dir.path().join("t.ckpt");
        save_checkpoint(&net, &p).unwrap();
        assert_eq!(load_checkpoint(&p, None).unwrap(), net);
    }

    #[test]
    fn large_seed_survives() {
        let dir = tempfile::tempdir().unwrap();
        let net = build_model(NetworkKind::Psn, u64::MAX - 12345);
        let p = dir.path().join("s.ckpt");
        save_checkpoint(&net, &p).unwrap();
        assert_eq!(load_checkpoint(&p, None).unwrap().seed(), u64::MAX - 12345);
    }

    #[test]
    fn faults_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ckpt");
        save_checkpoint(&build_model(NetworkKind::Tdn, 1), &p).unwrap();
        assert!(matches!(
            load_checkpoint(&p, Some(NetworkKind::Tpn)),
            Err(NetError::KindMismatch {
                expected: NetworkKind::Tpn,
                found: NetworkKind::Tdn
            })
        ));
        let bytes = fs::read(&p).unwrap();
        let q = dir.path().join("b.ckpt");
        for cut in [0, 3, 7, 11, 100, bytes.len() - 1] {
            fs::write(&q, &bytes[..cut]).unwrap();
            assert!(
                matches!(load_checkpoint(&q, None), Err(NetError::FormatError(_))),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        fs::write(&q, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&q, None),
            Err(NetError::FormatError(_))
        ));
        let mut bad = bytes;
        bad[4] = 9;
        fs::write(&q, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&q, None),
            Err(NetError::FormatError(_))
        ));
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing"), None),
            Err(NetError::IoFailure(_))
        ));
    }
}
