use super::tensor::RealMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamShape {
    Vector(usize),
    Matrix(usize, usize),
}

impl ParamShape {
    pub fn len(&self) -> usize {
        match *self {
            ParamShape::Vector(n) => n,
            ParamShape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ParamShape::Vector(n) => vec![n],
            ParamShape::Matrix(r, c) => vec![r, c],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Option<Self> {
        match *dims {
            [n] => Some(ParamShape::Vector(n)),
            [r, c] => Some(ParamShape::Matrix(r, c)),
            _ => None,
        }
    }
}

/// A named trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: ParamShape,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: ParamShape, value: Vec<f64>) -> Result<Self> {
        if value.len() != shape.len() {
            return Err(Error::Dimension {
                expected: shape.len(),
                actual: value.len(),
                context: "parameter value",
            });
        }
        Ok(Parameter {
            name: name.into(),
            shape,
            grad: vec![0.0; value.len()],
            value,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: ParamShape) -> Self {
        Parameter {
            name: name.into(),
            shape,
            value: vec![0.0; shape.len()],
            grad: vec![0.0; shape.len()],
        }
    }

    pub fn as_matrix(&self) -> Option<RealMatrix> {
        match self.shape {
            ParamShape::Matrix(r, c) => RealMatrix::new(r, c, self.value.clone()).ok(),
            ParamShape::Vector(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of parameters. Order is fixed at construction and is
/// the order used for checkpoints, gradient buffers and optimizer state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, param: Parameter) -> Result<ParamId> {
        if self.find(&param.name).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name `{}`",
                param.name
            )));
        }
        self.params.push(param);
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.find(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Zero-initialised gradient buffers matching this set.
    pub fn grad_buffers(&self) -> Grads {
        Grads(
            self.params
                .iter()
                .map(|p| vec![0.0; p.value.len()])
                .collect(),
        )
    }

    /// Adds `scale * grads` into each parameter's `grad`.
    pub fn accumulate(&mut self, grads: &Grads, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            for (a, b) in p.grad.iter_mut().zip(g) {
                *a += scale * b;
            }
        }
    }

    pub fn grads(&self) -> Grads {
        Grads(self.params.iter().map(|p| p.grad.clone()).collect())
    }

    /// Copies values from `other`, matched by name and shape.
    pub fn load_values(&mut self, other: &ParamSet) -> Result<()> {
        for p in &mut self.params {
            let src = other
                .by_name(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", p.name)))?;
            if src.shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for `{}`: {:?} vs {:?}",
                    p.name, src.shape, p.shape
                )));
            }
            p.value.copy_from_slice(&src.value);
        }
        Ok(())
    }
}

/// Gradient buffers laid out like a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    /// Two distinct buffers at once.
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a.0, b.0, "pair_mut needs distinct parameters");
        if a.0 < b.0 {
            let (lo, hi) = self.0.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.0.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }
}
