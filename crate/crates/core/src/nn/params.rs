use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Normal { std: f64 },
    Zeros,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub init: Init,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter vector layout: named blocks packed back to back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    total: usize,
}

/// A parameter block with its values, used by the on-disk formats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedBlock<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a block and returns its offset in the flat vector.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        let block = ParamBlock {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.total,
            init,
        };
        self.total += block.len();
        let offset = block.offset;
        self.blocks.push(block);
        offset
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut out = vec![T::zero(); self.total];
        for b in &self.blocks {
            if let Init::Normal { std } = b.init {
                for v in &mut out[b.range()] {
                    let s: f64 = rng.sample(StandardNormal);
                    *v = T::lit(s * std);
                }
            }
        }
        out
    }

    pub fn export<T: Scalar>(&self, params: &[T]) -> Vec<NamedBlock<T>> {
        self.blocks
            .iter()
            .map(|b| NamedBlock {
                name: b.name.clone(),
                shape: b.shape.clone(),
                values: params[b.range()].to_vec(),
            })
            .collect()
    }

    /// Rebuilds a flat vector from named blocks, checking names and shapes.
    pub fn import<T: Scalar>(&self, blocks: &[NamedBlock<T>]) -> Result<Vec<T>> {
        if blocks.len() != self.blocks.len() {
            return Err(Error::Schema(format!(
                "expected {} parameter blocks, found {}",
                self.blocks.len(),
                blocks.len()
            )));
        }
        let mut out = Vec::with_capacity(self.total);
        for (want, got) in self.blocks.iter().zip(blocks) {
            if want.name != got.name || want.shape != got.shape || got.values.len() != want.len() {
                return Err(Error::Schema(format!(
                    "parameter block mismatch: expected {} {:?}, found {} {:?} ({} values)",
                    want.name,
                    want.shape,
                    got.name,
                    got.shape,
                    got.values.len()
                )));
            }
            out.extend_from_slice(&got.values);
        }
        Ok(out)
    }
}

pub fn cast_params<T: Scalar, U: Scalar>(params: &[T]) -> Vec<U> {
    params.iter().map(|&v| U::lit(v.as_f64())).collect()
}
