use indexmap::IndexMap;

use super::{Graph, Real, Tensor, TensorError, Var};

/// Adam first and second moment buffers for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
}

/// Named learnable tensors plus optimizer state; the checkpoint unit.
///
/// Iteration order is insertion order, which fixes the checkpoint layout.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightStore<T> {
    params: IndexMap<String, Tensor<T>>,
    moments: IndexMap<String, Moments<T>>,
    step: u64,
    fingerprint: String,
}

impl<T: Real> WeightStore<T> {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        Self {
            params: IndexMap::new(),
            moments: IndexMap::new(),
            step: 0,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<(), TensorError> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(TensorError::InvalidArgument {
                op: "weight store",
                detail: format!("duplicate parameter `{name}`"),
            });
        }
        self.params.insert(name, tensor.with_requires_grad(true));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn moments(&self, name: &str) -> Option<&Moments<T>> {
        self.moments.get(name)
    }

    pub fn set_moments(&mut self, name: &str, moments: Moments<T>) -> Result<(), TensorError> {
        let numel = self
            .params
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_owned()))?
            .numel();
        if moments.first.len() != numel || moments.second.len() != numel {
            return Err(TensorError::InvalidArgument {
                op: "weight store",
                detail: format!("moment length mismatch for `{name}`"),
            });
        }
        self.moments.insert(name.to_owned(), moments);
        Ok(())
    }

    pub(crate) fn moments_mut(&mut self, name: &str) -> &mut Moments<T> {
        let numel = self.params[name].numel();
        self.moments.entry(name.to_owned()).or_insert_with(|| Moments {
            first: vec![T::zero(); numel],
            second: vec![T::zero(); numel],
        })
    }

    /// Places every parameter on `graph` as a gradient-tracking leaf.
    pub fn bind(&self, graph: &mut Graph<T>) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|(name, t)| {
                let mut leaf = t.clone();
                leaf.set_grad(None);
                (name.clone(), graph.param(leaf))
            })
            .collect();
        Bindings { vars }
    }

    /// Copies gradients from a graph after `backward`.
    pub fn collect_grads(&mut self, graph: &Graph<T>, bindings: &Bindings) {
        for (name, param) in self.params.iter_mut() {
            let grad = bindings.vars.get(name).and_then(|&v| graph.grad(v)).map(<[T]>::to_vec);
            param.set_grad(grad);
        }
    }

    pub fn clear_grads(&mut self) {
        self.params.values_mut().for_each(|p| p.set_grad(None));
    }
}

/// Parameter name to graph handle, produced by [`WeightStore::bind`].
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    /// Bindings over handles created elsewhere, e.g. gradient-check leaves.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Var)>) -> Self {
        Self {
            vars: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var, TensorError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}
