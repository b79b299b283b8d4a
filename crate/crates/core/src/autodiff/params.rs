use sha2::{Digest, Sha256};

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Ordered, named parameter tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.names.push(name.into());
        self.tensors.push(tensor);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every tensor on `tape`, trainable or frozen.
    pub fn register<'t>(&self, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
        self.tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }

    /// Checks names and shapes against an expected layout.
    pub fn check_layout(&self, expected: &[(String, Vec<usize>)]) -> Result<()> {
        if expected.len() != self.len() {
            return Err(Error::Validation(format!(
                "{} parameter tensors, layout expects {}",
                self.len(),
                expected.len()
            )));
        }
        for ((name, shape), (have_name, have)) in expected.iter().zip(self.iter()) {
            if name != have_name || shape.as_slice() != have.shape() {
                return Err(Error::Validation(format!(
                    "parameter {have_name} {:?} does not match layout entry {name} {shape:?}",
                    have.shape()
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and the exact bit patterns of every value.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Hands out registered variables in layout order, checking names as it goes.
pub struct ParamCursor<'a, 't> {
    names: &'a [String],
    vars: &'a [Var<'t>],
    next: usize,
}

impl<'a, 't> ParamCursor<'a, 't> {
    pub fn new(params: &'a ParamSet, vars: &'a [Var<'t>]) -> Result<Self> {
        if params.len() != vars.len() {
            return Err(Error::shape(
                "param_cursor",
                format!("{} names for {} variables", params.len(), vars.len()),
            ));
        }
        Ok(ParamCursor {
            names: params.names(),
            vars,
            next: 0,
        })
    }

    pub fn take(&mut self, name: &str) -> Result<&'a Var<'t>> {
        let i = self.next;
        match self.names.get(i) {
            Some(n) if n == name => {
                self.next += 1;
                Ok(&self.vars[i])
            }
            other => Err(Error::Validation(format!(
                "expected parameter {name} at position {i}, found {other:?}"
            ))),
        }
    }

    pub fn finish(self) -> Result<()> {
        if self.next == self.names.len() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "{} parameters left unused",
                self.names.len() - self.next
            )))
        }
    }
}
