use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Zip};
use rand_distr::{Distribution, Normal};

use crate::{rng, Error, Result};

const MAGIC: &[u8; 8] = b"SHRPEMB\0";
const VERSION: u64 = 1;

/// User and item embedding tables of a shared dimension.
///
/// The flat view used for perturbation arithmetic is the row-major user block
/// followed by the row-major item block.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub user: Array2<f64>,
    pub item: Array2<f64>,
}

impl EmbeddingParams {
    pub fn new(user: Array2<f64>, item: Array2<f64>) -> Result<Self> {
        if user.ncols() != item.ncols() {
            return Err(Error::Shape(format!(
                "user dim {} != item dim {}",
                user.ncols(),
                item.ncols()
            )));
        }
        Ok(Self { user, item })
    }

    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            user: Array2::zeros((num_users, dim)),
            item: Array2::zeros((num_items, dim)),
        }
    }

    /// Entries drawn i.i.d. from N(0, std²).
    pub fn gaussian(num_users: usize, num_items: usize, dim: usize, std: f64, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let mut draw = |n: usize| Array2::from_shape_simple_fn((n, dim), || normal.sample(&mut rng));
        let user = draw(num_users);
        let item = draw(num_items);
        Self { user, item }
    }

    pub fn num_users(&self) -> usize {
        self.user.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.item.nrows()
    }

    pub fn dim(&self) -> usize {
        self.user.ncols()
    }

    pub fn len(&self) -> usize {
        self.user.len() + self.item.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.user.dim() == other.user.dim() && self.item.dim() == other.item.dim()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.user.iter().chain(self.item.iter()).copied().collect()
    }

    pub fn from_flat(num_users: usize, num_items: usize, dim: usize, flat: &[f64]) -> Result<Self> {
        let split = num_users * dim;
        if flat.len() != split + num_items * dim {
            return Err(Error::Shape(format!(
                "flat vector of length {} for {num_users}x{dim} + {num_items}x{dim}",
                flat.len()
            )));
        }
        let user = Array2::from_shape_vec((num_users, dim), flat[..split].to_vec()).expect("checked length");
        let item = Array2::from_shape_vec((num_items, dim), flat[split..].to_vec()).expect("checked length");
        Ok(Self { user, item })
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        Zip::from(&mut self.user).and(&other.user).for_each(|a, &b| *a += alpha * b);
        Zip::from(&mut self.item).and(&other.item).for_each(|a, &b| *a += alpha * b);
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let u: f64 = Zip::from(&self.user).and(&other.user).fold(0.0, |acc, a, b| acc + a * b);
        let i: f64 = Zip::from(&self.item).and(&other.item).fold(0.0, |acc, a, b| acc + a * b);
        u + i
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.user.iter().chain(self.item.iter()).all(|x| x.is_finite())
    }

    /// Binary layout: 8-byte magic, then version, users, items and dim as
    /// little-endian u64, then little-endian f64 values (user block, item block).
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(MAGIC)?;
        for n in [VERSION, self.num_users() as u64, self.num_items() as u64, self.dim() as u64] {
            w.write_all(&n.to_le_bytes())?;
        }
        for x in self.user.iter().chain(self.item.iter()) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 40 || &bytes[..8] != MAGIC {
            return Err(Error::Format("missing magic header".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        if word(0) != VERSION {
            return Err(Error::Format(format!("unsupported version {}", word(0))));
        }
        let (nu, ni, d) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let body = &bytes[40..];
        if body.len() != 8 * (nu + ni) * d {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                8 * (nu + ni) * d,
                body.len()
            )));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(nu, ni, d, &flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_file_round_trip() {
        let p = EmbeddingParams::gaussian(3, 2, 4, 1.0, 9);
        let f = tempfile::NamedTempFile::new().unwrap();
        p.write(f.path()).unwrap();
        let bytes = fs::read(f.path()).unwrap();
        assert_eq!(bytes.len(), 40 + 8 * 5 * 4);
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert_eq!(EmbeddingParams::read(f.path()).unwrap(), p);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), b"SHRPEMB\0").unwrap();
        assert!(matches!(EmbeddingParams::read(f.path()), Err(Error::Format(_))));
    }

    #[test]
    fn gaussian_init_is_seeded() {
        let a = EmbeddingParams::gaussian(4, 4, 3, 0.01, 1);
        assert_eq!(a, EmbeddingParams::gaussian(4, 4, 3, 0.01, 1));
        assert_ne!(a, EmbeddingParams::gaussian(4, 4, 3, 0.01, 2));
    }

    proptest! {
        #[test]
        fn flatten_is_lossless(nu in 0usize..5, ni in 0usize..5, d in 1usize..4, seed in any::<u64>()) {
            let p = EmbeddingParams::gaussian(nu, ni, d, 1.0, seed);
            let back = EmbeddingParams::from_flat(nu, ni, d, &p.to_flat()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
