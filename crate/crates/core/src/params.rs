//! Conversion between typed model structs and flat named parameter sets.

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Real, Tensor};

/// A structure owning named weight tensors.
///
/// Visiting order is fixed per type; the flat [`ParamSet`] view orders names
/// lexicographically regardless.
pub trait Parameterized<T: Real> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Tensor<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>));

    fn to_param_set(&self) -> ParamSet<T> {
        let mut out = Vec::new();
        self.visit(&mut |name, t| out.push((name, t.clone())));
        out.into_iter().collect()
    }

    /// Overwrites every tensor from `ps`; names and shapes must match.
    fn load_param_set(&mut self, ps: &ParamSet<T>) -> Result<()> {
        let mut err = None;
        let mut seen = 0;
        self.visit_mut(&mut |name, t| {
            if err.is_some() {
                return;
            }
            match ps.get(&name) {
                Some(src) if src.shape() == t.shape() => {
                    t.data_mut().copy_from_slice(src.data());
                    seen += 1;
                }
                Some(src) => err = Some(Error::dim("load_param_set", t.shape(), src.shape())),
                None => err = Some(Error::Config(format!("missing parameter {name}"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen != ps.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, model expects {seen}",
                ps.len()
            )));
        }
        Ok(())
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn fill_zero(&mut self) {
        self.visit_mut(&mut |_, t| t.fill(T::zero()));
    }

    /// `self += scale * other`, pairing tensors by visiting order.
    fn add_scaled(&mut self, other: &Self, scale: T)
    where
        Self: Sized,
    {
        let mut src: Vec<&Tensor<T>> = Vec::new();
        other.visit(&mut |_, t| src.push(t));
        let mut it = src.into_iter();
        self.visit_mut(&mut |_, t| {
            let o = it.next().expect("same parameter layout");
            for (a, &b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += scale * b;
            }
        });
    }

    fn scale_all(&mut self, s: T) {
        self.visit_mut(&mut |_, t| t.scale(s));
    }

    fn all_finite(&self) -> std::result::Result<(), String> {
        let mut bad = None;
        self.visit(&mut |name, t| {
            if bad.is_none() && !t.all_finite() {
                bad = Some(name);
            }
        });
        bad.map_or(Ok(()), Err)
    }
}
