use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Named, ordered collection of real-valued parameter matrices.
///
/// Topology (names, order, shapes) is fixed at construction; every update
/// operation keeps it intact.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

/// Flat, shape-annotated form of one entry, used for checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Append an entry. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        self.names.push(name);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.values[i])
    }

    pub fn at(&self, index: usize) -> &Matrix {
        &self.values[index]
    }

    pub fn at_mut(&mut self, index: usize) -> &mut Matrix {
        &mut self.values[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    /// Same topology, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Array2::zeros(v.dim())).collect(),
        }
    }

    pub fn same_topology(&self, other: &ParamSet) -> bool {
        self.names == other.names && self.values.iter().zip(&other.values).all(|(a, b)| a.dim() == b.dim())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Flatten every entry in order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    /// Overwrite all scalars from a flat vector produced by [`ParamSet::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        crate::error::check_dim("ParamSet::set_flat", self.num_scalars(), flat.len())?;
        let mut off = 0;
        for v in &mut self.values {
            for x in v.iter_mut() {
                *x = flat[off];
                off += 1;
            }
        }
        Ok(())
    }

    /// Place every entry on the tape as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.values.iter().map(|v| tape.param(v.clone())).collect(),
        }
    }

    /// Place every entry on the tape as a constant.
    pub fn bind_const(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.values.iter().map(|v| tape.constant(v.clone())).collect(),
        }
    }

    /// Collect the gradients of a bound copy into a ParamSet of the same
    /// topology; unreached entries get zeros.
    pub fn gradients(&self, bound: &Bound, grads: &Gradients) -> ParamSet {
        ParamSet {
            names: self.names.clone(),
            values: self
                .values
                .iter()
                .zip(&bound.vars)
                .map(|(v, var)| grads.get(*var).cloned().unwrap_or_else(|| Array2::zeros(v.dim())))
                .collect(),
        }
    }

    pub fn to_entries(&self) -> Vec<ParamEntry> {
        self.iter()
            .map(|(name, v)| ParamEntry {
                name: name.to_string(),
                shape: [v.nrows(), v.ncols()],
                data: v.iter().copied().collect(),
            })
            .collect()
    }

    pub fn from_entries(entries: &[ParamEntry]) -> Result<Self> {
        let mut set = ParamSet::new();
        for e in entries {
            let m = Array2::from_shape_vec((e.shape[0], e.shape[1]), e.data.clone())
                .map_err(|err| Error::Serialization(format!("parameter '{}': {err}", e.name)))?;
            set.insert(e.name.clone(), m)?;
        }
        Ok(set)
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape handles of a [`ParamSet`], in entry order.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn names_are_unique() {
        let mut p = ParamSet::new();
        p.insert("w", array![[1.0]]).unwrap();
        assert!(p.insert("w", array![[2.0]]).is_err());
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn flat_roundtrip_and_topology() {
        let mut p = ParamSet::new();
        p.insert("w", array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        p.insert("b", array![[5.0, 6.0]]).unwrap();
        assert_eq!(p.num_scalars(), 6);
        let flat = p.to_flat();
        let mut q = p.zeros_like();
        assert!(q.same_topology(&p));
        q.set_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&flat[..5]).is_err());
        let back = ParamSet::from_entries(&p.to_entries()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn gradients_fill_unreached_with_zeros() {
        let mut p = ParamSet::new();
        p.insert("a", array![[2.0]]).unwrap();
        p.insert("unused", array![[1.0, 1.0]]).unwrap();
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let sq = t.square(b.var(0));
        let loss = t.mean(sq);
        let g = p.gradients(&b, &t.backward(loss));
        assert_eq!(g.get("a").unwrap(), &array![[4.0]]);
        assert_eq!(g.get("unused").unwrap(), &array![[0.0, 0.0]]);
    }
}
