//! Test-only helpers: seeded tensors and a central finite-difference oracle.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::autodiff::{Graph, Tensor, Var};
use crate::Result;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn random_tensor(r: &mut Xoshiro256PlusPlus, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| r.gen_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[derive(Debug)]
pub struct GradReport {
    pub max_rel_error: f64,
}

/// Compares analytic gradients of `f` at `inputs` with central differences
/// (h = 1e-5). Relative error uses `max(|a|, |n|)` as scale and falls back to
/// absolute error below 1e-6 magnitude.
pub fn check_gradients<F>(inputs: &[Tensor], f: F) -> GradReport
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        let root = f(&mut g, &vars).unwrap();
        g.value(root).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.param(x.clone())).collect();
    let root = f(&mut g, &vars).unwrap();
    let grads = g.backward(root).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], input);
        for k in 0..input.len() {
            let mut plus: Vec<Tensor> = inputs.to_vec();
            plus[i].data_mut()[k] += h;
            let mut minus: Vec<Tensor> = inputs.to_vec();
            minus[i].data_mut()[k] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[k];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-6 {
                // absolute criterion near zero, mapped onto the relative scale
                (a - numeric).abs() * 1e-4 / 1e-6
            } else {
                (a - numeric).abs() / scale
            };
            worst = worst.max(err);
        }
    }
    GradReport { max_rel_error: worst }
}
