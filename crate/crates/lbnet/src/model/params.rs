//! Named, ordered parameter storage.
//!
//! Every learnable tensor lives in one `ParamSet` keyed by a dotted path
//! (e.g. `lffm.0.frdab.1.refine.conv0.weight`). Registration order is
//! meaningful twice over: it fixes the RNG draw sequence at initialization
//! and the record order in checkpoints. Weight sharing is structural — a
//! shared block registers its parameters once and every use site fetches
//! the same entry.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Default)]
pub struct ParamSet {
    map: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { map: IndexMap::new() }
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<()> {
        if self.map.contains_key(name) {
            return Err(Error::Config(format!("parameter {name} registered twice")));
        }
        self.map.insert(name.to_string(), t);
        Ok(())
    }

    /// Fetch by name; the returned handle shares storage with the set.
    pub fn get(&self, name: &str) -> Result<Tensor> {
        self.map
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    /// Swap in a new value for an existing entry (same shape, same position).
    pub fn replace(&mut self, name: &str, t: Tensor) -> Result<()> {
        let slot = self
            .map
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        if slot.shape() != t.shape() {
            return Err(Error::dim(
                "shape",
                format!("replacing {name}: shape {:?} with {:?}", slot.shape(), t.shape()),
            ));
        }
        *slot = t;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn total_elements(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    /// Scalar parameters whose name starts with `prefix`.
    pub fn elements_with_prefix(&self, prefix: &str) -> usize {
        self.map
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn zero_grads(&self) {
        for t in self.map.values() {
            t.zero_grad();
        }
    }

    /// Assemble a set from parallel name/tensor slices (used to re-bind a
    /// forward pass onto substitute tensors, e.g. under finite differencing).
    pub fn from_pairs(names: &[String], tensors: &[Tensor]) -> Result<Self> {
        if names.len() != tensors.len() {
            return Err(Error::Usage(format!(
                "{} names vs {} tensors",
                names.len(),
                tensors.len()
            )));
        }
        let mut set = ParamSet::new();
        for (n, t) in names.iter().zip(tensors) {
            set.insert(n, t.clone())?;
        }
        Ok(set)
    }
}

/// Registers parameters with Kaiming-uniform weights (bound √(6/fan_in)),
/// zero biases, and unit layer-norm gains. Draws come from a seeded stream
/// in registration order, so a config and a seed fully determine the model.
pub struct Builder {
    set: ParamSet,
    rng: ChaCha20Rng,
}

impl Builder {
    pub fn new(seed: u64) -> Self {
        Builder { set: ParamSet::new(), rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn finish(self) -> ParamSet {
        self.set
    }

    fn kaiming(&mut self, shape: &[usize], fan_in: usize) -> Result<Tensor> {
        let bound = (6.0 / fan_in as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = (0..numel).map(|_| self.rng.gen::<f64>() * 2.0 * bound - bound).collect();
        Tensor::param(shape, data)
    }

    /// `(cout, cin_per_group, k, k)` weight plus `(cout)` bias under `name`.
    pub fn conv(&mut self, name: &str, cout: usize, cin_per_group: usize, k: usize) -> Result<()> {
        let w = self.kaiming(&[cout, cin_per_group, k, k], cin_per_group * k * k)?;
        self.set.insert(&format!("{name}.weight"), w)?;
        self.set.insert(&format!("{name}.bias"), Tensor::zeros(&[cout])?.to_param())
    }

    /// As `conv`, but with the weight zeroed. A conv that starts at zero
    /// contributes nothing on the first forward pass, which lets a residual
    /// branch open up gradually instead of drowning its skip connection.
    pub fn conv_zero(&mut self, name: &str, cout: usize, cin_per_group: usize, k: usize) -> Result<()> {
        let w = Tensor::zeros(&[cout, cin_per_group, k, k])?.to_param();
        self.set.insert(&format!("{name}.weight"), w)?;
        self.set.insert(&format!("{name}.bias"), Tensor::zeros(&[cout])?.to_param())
    }

    /// `(dout, din)` weight plus `(dout)` bias under `name`.
    pub fn linear(&mut self, name: &str, dout: usize, din: usize) -> Result<()> {
        let w = self.kaiming(&[dout, din], din)?;
        self.set.insert(&format!("{name}.weight"), w)?;
        self.set.insert(&format!("{name}.bias"), Tensor::zeros(&[dout])?.to_param())
    }

    /// Unit `gamma`, zero `beta` of width `d` under `name`.
    pub fn layer_norm(&mut self, name: &str, d: usize) -> Result<()> {
        self.set.insert(&format!("{name}.gamma"), Tensor::full(&[d], 1.0)?.to_param())?;
        self.set.insert(&format!("{name}.beta"), Tensor::zeros(&[d])?.to_param())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registration_order_is_preserved() {
        let mut b = Builder::new(0);
        b.conv("z", 2, 3, 3).unwrap();
        b.linear("a", 2, 2).unwrap();
        b.layer_norm("m", 4).unwrap();
        let set = b.finish();
        let names: Vec<&str> = set.names().collect();
        assert_eq!(names, ["z.weight", "z.bias", "a.weight", "a.bias", "m.gamma", "m.beta"]);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut b = Builder::new(0);
        b.conv("x", 2, 2, 1).unwrap();
        assert!(b.conv("x", 2, 2, 1).is_err());
    }

    #[test]
    fn same_seed_reproduces_all_values() {
        let build = |seed| {
            let mut b = Builder::new(seed);
            b.conv("c", 4, 3, 3).unwrap();
            b.linear("l", 8, 16).unwrap();
            b.finish()
        };
        let (a, b, c) = (build(7), build(7), build(8));
        for name in ["c.weight", "l.weight"] {
            assert_eq!(a.get(name).unwrap().data(), b.get(name).unwrap().data());
            assert_ne!(a.get(name).unwrap().data(), c.get(name).unwrap().data());
        }
    }

    #[test]
    fn init_respects_fan_in_bound_and_zero_bias() {
        let mut b = Builder::new(3);
        b.conv("c", 16, 8, 3).unwrap();
        let set = b.finish();
        let w = set.get("c.weight").unwrap();
        let bound = (6.0_f64 / (8.0 * 9.0)).sqrt();
        let max = w.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= bound, "draw {max} exceeds bound {bound}");
        assert!(max > 0.8 * bound, "1152 draws should come close to the bound, max {max}");
        assert!(set.get("c.bias").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(w.requires_grad() && set.get("c.bias").unwrap().requires_grad());
    }

    #[test]
    fn layer_norm_starts_as_identity_transform() {
        let mut b = Builder::new(0);
        b.layer_norm("n", 6).unwrap();
        let set = b.finish();
        assert!(set.get("n.gamma").unwrap().data().iter().all(|&v| v == 1.0));
        assert!(set.get("n.beta").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn replace_keeps_position_and_checks_shape() {
        let mut b = Builder::new(0);
        b.linear("a", 2, 3).unwrap();
        b.linear("b", 2, 3).unwrap();
        let mut set = b.finish();
        set.replace("a.weight", Tensor::param(&[2, 3], vec![9.0; 6]).unwrap()).unwrap();
        let names: Vec<&str> = set.names().collect();
        assert_eq!(names[0], "a.weight");
        assert_eq!(set.get("a.weight").unwrap().data(), &[9.0; 6]);
        assert!(set.replace("a.weight", Tensor::param(&[3, 2], vec![0.0; 6]).unwrap()).is_err());
        assert!(set.replace("missing", Tensor::param(&[1], vec![0.0]).unwrap()).is_err());
    }

    #[test]
    fn element_counts_by_prefix() {
        let mut b = Builder::new(0);
        b.conv("blk.a", 4, 2, 3).unwrap(); // 72 + 4
        b.conv("blk.b", 2, 2, 1).unwrap(); // 4 + 2
        b.conv("other", 2, 2, 1).unwrap();
        let set = b.finish();
        assert_eq!(set.elements_with_prefix("blk."), 82);
        assert_eq!(set.total_elements(), 88);
    }
}
