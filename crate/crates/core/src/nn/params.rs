//! Named, flat parameter storage with accumulated gradients.

use std::collections::HashMap;

use rand::Rng;

use crate::{Error, Result};

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// All zeros (used for biases and for output layers that must start
    /// as the identity-free "no action" mapping).
    Zeros,
    /// All entries set to one fixed value.
    Constant(f64),
    /// Uniform on `[-a, a]`.
    Uniform(f64),
    /// Glorot/Xavier uniform: `U(±sqrt(6 / (fan_in + fan_out)))` with the
    /// fans taken from the array shape. Suits tanh/sigmoid layers.
    Xavier,
}

/// One named parameter array (matrix or vector) plus its gradient
/// accumulator. Matrices are row-major; vectors have `cols == 1`.
#[derive(Debug, Clone)]
pub struct ParamArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamArray {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// An ordered collection of named parameter arrays.
///
/// Order is the registration order and is part of the public contract:
/// optimizer state, checkpoints, and gradient reports all index arrays by
/// this order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    arrays: Vec<ParamArray>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a `rows × cols` array under `name` and returns its index.
    pub fn add(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut impl Rng,
    ) -> Result<usize> {
        if self.by_name.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("parameter {name:?} has a zero dimension")));
        }
        let n = rows * cols;
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Constant(c) => vec![c; n],
            Init::Uniform(a) => (0..n).map(|_| rng.random_range(-a..=a)).collect(),
            Init::Xavier => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..=a)).collect()
            }
        };
        let idx = self.arrays.len();
        self.arrays.push(ParamArray {
            name: name.to_string(),
            rows,
            cols,
            values,
            grad: vec![0.0; n],
        });
        self.by_name.insert(name.to_string(), idx);
        Ok(idx)
    }

    /// Replaces the values of an existing array (shape must match).
    pub fn set_values(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let idx = self.index_of(name)?;
        let arr = &mut self.arrays[idx];
        if values.len() != arr.values.len() {
            return Err(Error::Checkpoint(format!(
                "array {name:?}: expected {} values, got {}",
                arr.values.len(),
                values.len()
            )));
        }
        arr.values.copy_from_slice(values);
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name:?}")))
    }

    pub fn get(&self, name: &str) -> Result<&ParamArray> {
        Ok(&self.arrays[self.index_of(name)?])
    }

    pub fn at(&self, idx: usize) -> &ParamArray {
        &self.arrays[idx]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut ParamArray {
        &mut self.arrays[idx]
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamArray> {
        self.arrays.iter()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.arrays.iter().map(|a| a.len()).sum()
    }

    /// Clears every gradient accumulator.
    pub fn zero_grads(&mut self) {
        for a in &mut self.arrays {
            a.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Scales every gradient accumulator (used to average over batches).
    pub fn scale_grads(&mut self, s: f64) {
        for a in &mut self.arrays {
            a.grad.iter_mut().for_each(|g| *g *= s);
        }
    }

    /// Global L2 norm of the accumulated gradient.
    pub fn grad_norm(&self) -> f64 {
        self.arrays
            .iter()
            .flat_map(|a| a.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Errors if any value or gradient is non-finite.
    pub fn assert_finite(&self) -> Result<()> {
        for a in &self.arrays {
            if a.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite value in {:?}", a.name)));
            }
            if a.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {:?}", a.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registration_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ps = ParamSet::new();
        let w = ps.add("w", 3, 4, Init::Xavier, &mut rng).unwrap();
        let b = ps.add("b", 3, 1, Init::Zeros, &mut rng).unwrap();
        assert_eq!(w, 0);
        assert_eq!(b, 1);
        assert_eq!(ps.get("w").unwrap().len(), 12);
        assert!(ps.get("b").unwrap().values.iter().all(|&v| v == 0.0));
        assert_eq!(ps.num_scalars(), 15);
        assert!(ps.add("w", 1, 1, Init::Zeros, &mut rng).is_err());
    }

    #[test]
    fn xavier_bound_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        ps.add("w", 10, 20, Init::Xavier, &mut rng).unwrap();
        let a = (6.0f64 / 30.0).sqrt();
        assert!(ps.get("w").unwrap().values.iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn set_values_validates_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ps = ParamSet::new();
        ps.add("b", 2, 1, Init::Zeros, &mut rng).unwrap();
        assert!(ps.set_values("b", &[1.0, 2.0, 3.0]).is_err());
        ps.set_values("b", &[1.0, 2.0]).unwrap();
        assert_eq!(ps.get("b").unwrap().values, vec![1.0, 2.0]);
    }
}
