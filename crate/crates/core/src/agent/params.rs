//! Named parameter tensors.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Insertion-ordered collection of tensors addressed by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> ParamId {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor {name} shape/data mismatch");
        assert!(self.find(&name).is_none(), "duplicate tensor {name}");
        self.tensors.push(Tensor {
            name,
            shape: shape.to_vec(),
            data,
        });
        ParamId(self.tensors.len() - 1)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    /// Glorot-uniform initialisation, using the last two dimensions as
    /// (fan_out, fan_in); vectors use their length for both.
    pub fn add_random(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut impl Rng) -> ParamId {
        let n: usize = shape.iter().product();
        let (fan_out, fan_in) = match shape {
            [o, i] => (*o, *i),
            _ => (n, n),
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, shape, data)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flat_map(|t| &t.data).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds_and_lookup() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::default();
        let w = s.add_random("w", &[10, 20], &mut rng);
        let b = s.add_zeros("b", &[10]);
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(s.get(w).data.iter().all(|v| v.abs() < lim));
        assert_eq!(s.find("b"), Some(b));
        assert_eq!(s.num_scalars(), 210);
    }
}
