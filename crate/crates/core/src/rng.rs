//! Hierarchical, path-addressed random streams.
//!
//! Every draw in a run comes from a stream identified by the master seed and a
//! path such as `[purpose, t, task, k, replica]`. Streams are derived by
//! hashing the path, so the order in which tasks or Monte-Carlo replicas are
//! evaluated (including in parallel) never changes the numbers they see.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::params::ParamVector;

/// Top-level path component naming what a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Task = 2,
    Dataset = 3,
    InnerBatch = 4,
    InnerNoise = 5,
    UnionBatch = 6,
    OuterNoise = 7,
    EvalTrain = 8,
    EvalTest = 9,
    JointTasks = 10,
    JointBatch = 11,
    JointNoise = 12,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn path_key(master_seed: u64, path: &[u64]) -> [u8; 32] {
    let mut h = splitmix(master_seed);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h = splitmix(h ^ path.len() as u64);
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

/// A reproducible random stream bound to `(master_seed, path)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<u64>,
    rng: ChaCha8Rng,
}

/// Derives the stream for `path` under `master_seed`.
///
/// # Panics
/// If `path` is empty.
pub fn derive_stream(master_seed: u64, path: &[u64]) -> RngStream {
    assert!(!path.is_empty(), "stream path must be non-empty");
    RngStream {
        master_seed,
        path: path.to_vec(),
        rng: ChaCha8Rng::from_seed(path_key(master_seed, path)),
    }
}

impl RngStream {
    pub fn for_purpose(master_seed: u64, purpose: Purpose, rest: &[u64]) -> Self {
        let mut path = Vec::with_capacity(rest.len() + 1);
        path.push(purpose as u64);
        path.extend_from_slice(rest);
        derive_stream(master_seed, &path)
    }

    /// The stream at `self.path ++ extra`; independent of how much of `self`
    /// has been consumed.
    pub fn child(&self, extra: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(extra);
        derive_stream(self.master_seed, &path)
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// `dim` i.i.d. draws from `N(0, std^2)`.
    pub fn normal_vec(&mut self, dim: usize, std: f64) -> ParamVector {
        let v: Vec<f64> = (0..dim).map(|_| std * self.normal()).collect();
        ParamVector::new(v).expect("finite gaussian draws")
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(seed: u64, path: &[u64], n: usize) -> Vec<f64> {
        let mut s = derive_stream(seed, path);
        (0..n).map(|_| s.normal()).collect()
    }

    #[test]
    fn deterministic() {
        assert_eq!(draws(7, &[1, 2], 100), draws(7, &[1, 2], 100));
    }

    #[test]
    fn path_and_seed_separate() {
        assert_ne!(draws(7, &[1, 2], 100), draws(7, &[1, 3], 100));
        assert_ne!(draws(7, &[1, 2], 100), draws(8, &[1, 2], 100));
        // prefix paths are distinct streams too
        assert_ne!(draws(7, &[1], 100), draws(7, &[1, 0], 100));
    }

    #[test]
    fn child_ignores_consumption() {
        let mut a = derive_stream(3, &[4]);
        let b = derive_stream(3, &[4]);
        a.normal();
        let mut ca = a.child(&[9]);
        let mut cb = b.child(&[9]);
        assert_eq!(ca.normal(), cb.normal());
        let mut direct = derive_stream(3, &[4, 9]);
        assert_eq!(direct.normal(), derive_stream(3, &[4, 9]).normal());
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let n = 10_000;
        let a = draws(11, &[5, 1], n);
        let b = draws(11, &[5, 2], n);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let r = cov / (va * vb).sqrt();
        assert!(r.abs() < 0.05, "r = {r}");
    }

    #[test]
    #[should_panic]
    fn empty_path_panics() {
        derive_stream(1, &[]);
    }
}
