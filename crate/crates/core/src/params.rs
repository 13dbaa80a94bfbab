//! Named model parameters and the binary checkpoint format.
//!
//! Checkpoint layout: for each tensor, in store order, `u32 name_len`,
//! name bytes, `u32 rank`, `u32` per dimension, then float32 payload —
//! all little-endian — followed by a CRC32 (IEEE) of everything before it.

use std::cell::RefCell;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Ordered name -> tensor map. Iteration order is insertion order, so runs
/// are deterministic.
pub struct ParameterStore<F: Scalar> {
    entries: IndexMap<String, Tensor<F>>,
    trace: RefCell<Option<Vec<String>>>,
}

impl<F: Scalar> Default for ParameterStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParameterStore<F> {
    pub fn new() -> Self {
        ParameterStore { entries: IndexMap::new(), trace: RefCell::new(None) }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<F>) {
        assert!(
            self.entries.insert(name.to_string(), t).is_none(),
            "duplicate parameter name {name}"
        );
    }

    /// Fetch a parameter. Records the name when access tracing is on.
    pub fn get(&self, name: &str) -> &Tensor<F> {
        if let Some(log) = self.trace.borrow_mut().as_mut() {
            log.push(name.to_string());
        }
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.get(name)
    }

    /// Replace a parameter value (optimizer updates create fresh leaves).
    pub fn set(&mut self, name: &str, t: Tensor<F>) {
        let slot = self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        *slot = t;
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(|t| t.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for t in self.entries.values() {
            t.zero_grad();
        }
    }

    /// Start recording which parameters forward passes touch.
    pub fn start_trace(&self) {
        *self.trace.borrow_mut() = Some(Vec::new());
    }

    /// Stop recording and return the touched names in access order.
    pub fn take_trace(&self) -> Vec<String> {
        self.trace.borrow_mut().take().unwrap_or_default()
    }

    /// Deep copy with fresh trainable leaves.
    pub fn clone_values(&self) -> ParameterStore<F> {
        let mut out = ParameterStore::new();
        for (name, t) in self.iter() {
            out.insert(name, Tensor::param(t.shape().to_vec(), t.data().to_vec()));
        }
        out
    }

    /// Deep copy with constant leaves: forward passes over it build no
    /// backward graph (frozen KD teachers, decode-time models).
    pub fn clone_frozen(&self) -> ParameterStore<F> {
        let mut out = ParameterStore::new();
        for (name, t) in self.iter() {
            out.insert(name, Tensor::new(t.shape().to_vec(), t.data().to_vec()));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body: Vec<u8> = Vec::new();
        for (name, t) in self.iter() {
            body.extend_from_slice(&(name.len() as u32).to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            body.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                body.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                body.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
            }
        }
        let crc = crc32(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParameterStore<F>> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        if bytes.len() < 4 {
            return Err(Error::Checkpoint(format!("{}: truncated file", path.display())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32(body) != stored {
            return Err(Error::Checkpoint(format!("{}: CRC mismatch", path.display())));
        }
        let mut store = ParameterStore::new();
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            let s = body
                .get(*off..*off + n)
                .ok_or_else(|| Error::Checkpoint(format!("{}: truncated entry", path.display())))?;
            *off += n;
            Ok(s)
        };
        while off < body.len() {
            let name_len = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
                .map_err(|_| Error::Checkpoint(format!("{}: bad name bytes", path.display())))?;
            let rank = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize);
            }
            let numel: usize = shape.iter().product();
            let payload = take(&mut off, numel * 4)?;
            let data: Vec<F> = payload
                .chunks_exact(4)
                .map(|c| F::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect();
            store.insert(&name, Tensor::param(shape, data));
        }
        Ok(store)
    }
}

/// Parameter-wise arithmetic mean of several checkpoints. All inputs must
/// share names and shapes. Accumulation runs in f64.
pub fn average_checkpoints<F: Scalar>(paths: &[impl AsRef<Path>]) -> Result<ParameterStore<F>> {
    if paths.is_empty() {
        return Err(Error::Checkpoint("no checkpoints to average".into()));
    }
    let stores: Vec<ParameterStore<F>> = paths
        .iter()
        .map(|p| ParameterStore::load(p.as_ref()))
        .collect::<Result<_>>()?;
    let first = &stores[0];
    for (i, s) in stores.iter().enumerate().skip(1) {
        if s.len() != first.len()
            || !first
                .iter()
                .zip(s.iter())
                .all(|((an, at), (bn, bt))| an == bn && at.shape() == bt.shape())
        {
            return Err(Error::Checkpoint(format!(
                "checkpoint {} does not match the first checkpoint's architecture",
                paths[i].as_ref().display()
            )));
        }
    }
    let k = stores.len() as f64;
    let mut out = ParameterStore::new();
    for (name, t) in first.iter() {
        let mut acc = vec![0.0f64; t.numel()];
        for s in &stores {
            for (a, v) in acc.iter_mut().zip(s.get(name).data()) {
                *a += v.to_f64_lossy();
            }
        }
        let data: Vec<F> = acc.into_iter().map(|a| F::from_f64(a / k)).collect();
        out.insert(name, Tensor::param(t.shape().to_vec(), data));
    }
    Ok(out)
}

/// CRC32 (IEEE 802.3, reflected, poly 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc: u32 = 0xFFFF_FFFF;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc32_reference_vector() {
        assert_eq!(crc32(b"123456789"), 0xCBF43926);
    }

    #[test]
    fn save_load_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let mut s = ParameterStore::<f32>::new();
        s.insert("w", Tensor::param(vec![2, 3], vec![0.5, -1.25, 3.0, 0.1, -0.75, 2.5]));
        s.insert("b", Tensor::param(vec![3], vec![0.0, 1.0, -1.0]));
        s.save(&path).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();

        let loaded = ParameterStore::<f32>::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.get("w").data(), s.get("w").data());

        let path2 = dir.path().join("b.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(bytes1, std::fs::read(&path2).unwrap());
    }

    #[test]
    fn load_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let mut s = ParameterStore::<f32>::new();
        s.insert("w", Tensor::param(vec![2], vec![1.0, 2.0]));
        s.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[6] ^= 0xFF;
        std::fs::write(&path, bytes).unwrap();
        assert!(ParameterStore::<f32>::load(&path).is_err());
    }

    #[test]
    fn average_midpoint_and_identity() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("1.ckpt"), dir.path().join("2.ckpt"));
        let mut a = ParameterStore::<f32>::new();
        a.insert("w", Tensor::param(vec![1], vec![1.0]));
        a.save(&p1).unwrap();
        let mut b = ParameterStore::<f32>::new();
        b.insert("w", Tensor::param(vec![1], vec![3.0]));
        b.save(&p2).unwrap();

        let avg = average_checkpoints::<f32>(&[&p1, &p2]).unwrap();
        assert_eq!(avg.get("w").data(), &[2.0]);

        let one = average_checkpoints::<f32>(&[&p1]).unwrap();
        assert_eq!(one.get("w").data(), &[1.0]);
    }

    #[test]
    fn average_of_copies_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = ParameterStore::<f32>::new();
        s.insert("w", Tensor::param(vec![3], vec![0.3333, -7.25, 1e-3]));
        let paths: Vec<_> = (0..10)
            .map(|i| {
                let p = dir.path().join(format!("{i}.ckpt"));
                s.save(&p).unwrap();
                p
            })
            .collect();
        let avg = average_checkpoints::<f32>(&paths).unwrap();
        for (a, b) in avg.get("w").data().iter().zip(s.get("w").data()) {
            assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn average_rejects_mismatched_architectures() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("1.ckpt"), dir.path().join("2.ckpt"));
        let mut a = ParameterStore::<f32>::new();
        a.insert("w", Tensor::param(vec![2], vec![1.0, 2.0]));
        a.save(&p1).unwrap();
        let mut b = ParameterStore::<f32>::new();
        b.insert("w", Tensor::param(vec![3], vec![1.0, 2.0, 3.0]));
        b.save(&p2).unwrap();
        assert!(average_checkpoints::<f32>(&[&p1, &p2]).is_err());
    }
}
