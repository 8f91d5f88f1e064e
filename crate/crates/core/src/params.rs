//! Named parameter storage, deterministic initialization and the binary
//! weight file format.
//!
//! Weight file layout (little-endian):
//!
//! ```text
//! "CATW" | u32 version = 1 | u32 entry count
//! per entry: u16 name length | UTF-8 name | u8 dtype | u8 rank | rank × u32 dims | elements
//! ```
//!
//! dtype 0 is 32-bit float, dtype 1 is 64-bit float.

use std::collections::BTreeMap;
use std::path::Path;

use cat_tensor::{Element, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CatError, Result};

pub const MAGIC: &[u8; 4] = b"CATW";
pub const VERSION: u32 = 1;

/// Standard deviation of the truncated-normal weight initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub tensor: Tensor<T>,
    pub trainable: bool,
}

/// Ordered map from hierarchical name to tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    entries: BTreeMap<String, ParamEntry<T>>,
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trainable entry; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(CatError::Entry {
                name,
                reason: "duplicate name".into(),
            });
        }
        self.entries.insert(
            name,
            ParamEntry {
                tensor,
                trainable: true,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(name).map(|e| &mut e.tensor)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.get(name)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> bool {
        match self.entries.get_mut(name) {
            Some(e) => {
                e.trainable = trainable;
                true
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.tensor))
    }

    /// Mutable view of trainable tensors, in name order.
    pub fn trainable_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries
            .iter_mut()
            .filter(|(_, e)| e.trainable)
            .map(|(k, e)| (k.as_str(), &mut e.tensor))
    }

    /// Total number of scalar elements.
    pub fn total_elements(&self) -> usize {
        self.entries.values().map(|e| e.tensor.len()).sum()
    }

    pub fn map(&self, mut f: impl FnMut(&str, &Tensor<T>) -> Tensor<T>) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        ParamEntry {
                            tensor: f(k, &e.tensor),
                            trainable: e.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    (
                        k.clone(),
                        ParamEntry {
                            tensor: e.tensor.cast(),
                            trainable: e.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Bit-exact equality of names, shapes and elements.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, a), (kb, b))| ka == kb && a.tensor.bit_eq(&b.tensor))
    }

    /// Puts every entry on `tape`. Trainable entries are watched under their
    /// name; the rest become constants.
    pub fn bind(&self, tape: &Tape<T>) -> BoundParams<T> {
        let vars = self
            .entries
            .iter()
            .map(|(k, e)| {
                let v = if e.trainable {
                    tape.watch(k.clone(), e.tensor.clone())
                } else {
                    tape.constant(e.tensor.clone())
                };
                (k.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, e) in &self.entries {
            let bytes = name.as_bytes();
            let len = u16::try_from(bytes.len()).map_err(|_| CatError::Entry {
                name: name.clone(),
                reason: "name longer than 65535 bytes".into(),
            })?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(bytes);
            out.push(T::DTYPE);
            let shape = e.tensor.shape();
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in e.tensor.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CatError::Weights {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CatError::Weights {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let count = r.u32()?;
        let mut store = Self::new();
        for _ in 0..count {
            let at = r.pos;
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CatError::Weights {
                    offset: at,
                    reason: "entry name is not UTF-8".into(),
                })?
                .to_string();
            let dtype = r.u8()?;
            if dtype != T::DTYPE {
                return Err(CatError::Entry {
                    name,
                    reason: format!("dtype {dtype} does not match expected {}", T::DTYPE),
                });
            }
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * T::BYTES).map_err(|e| match e {
                CatError::Weights { offset, .. } => CatError::Weights {
                    offset,
                    reason: format!("truncated data for `{name}`"),
                },
                other => other,
            })?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            let tensor = Tensor::from_vec(&shape, data).map_err(|e| CatError::Entry {
                name: name.clone(),
                reason: e.to_string(),
            })?;
            store.insert(name, tensor)?;
        }
        if r.pos != bytes.len() {
            return Err(CatError::Weights {
                offset: r.pos,
                reason: "trailing bytes after last entry".into(),
            });
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CatError::Weights {
                offset: self.pos,
                reason: format!("truncated: wanted {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_weights<T: Element>(store: &ParamStore<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, store.to_bytes()?)?;
    Ok(())
}

pub fn load_weights<T: Element>(path: impl AsRef<Path>) -> Result<ParamStore<T>> {
    ParamStore::from_bytes(&std::fs::read(path)?)
}

/// Parameters placed on a tape.
pub struct BoundParams<T> {
    vars: BTreeMap<String, Var<T>>,
}

impl<T: Element> BoundParams<T> {
    pub fn get(&self, name: &str) -> Result<&Var<T>> {
        self.vars.get(name).ok_or_else(|| CatError::Entry {
            name: name.to_string(),
            reason: "missing parameter".into(),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }
}

/// How a tensor is filled by [`init_tensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    TruncNormal,
    Zeros,
    Ones,
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in name.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Fills one named tensor. Each name draws from its own stream seeded by
/// `(seed, name)`, so values do not depend on initialization order.
pub fn init_tensor<T: Element>(seed: u64, name: &str, shape: &[usize], init: Init) -> Result<Tensor<T>> {
    Ok(match init {
        Init::Zeros => Tensor::zeros(shape)?,
        Init::Ones => Tensor::ones(shape)?,
        Init::TruncNormal => {
            let mut rng = ChaCha8Rng::seed_from_u64(name_seed(seed, name));
            let normal = Normal::new(0.0, INIT_STD).expect("valid std");
            let n = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            while data.len() < n {
                let v: f64 = normal.sample(&mut rng);
                if v.abs() <= 2.0 * INIT_STD {
                    data.push(T::from_f64(v));
                }
            }
            Tensor::from_vec(shape, data)?
        }
    })
}
