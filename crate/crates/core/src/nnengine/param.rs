use super::Scalar;

/// A named parameter array handed out by [`Parameterized::visit_params`].
///
/// `grad` is `None` for non-trainable buffers such as batch-norm running
/// statistics; those are checkpointed but never touched by the optimizer.
pub struct ParamSlot<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [T],
    pub grad: Option<&'a mut [T]>,
}

impl<T> ParamSlot<'_, T> {
    pub fn is_trainable(&self) -> bool {
        self.grad.is_some()
    }
}

/// Anything owning parameter arrays. Visiting order must be stable: the
/// optimizer and the checkpoint format both rely on it.
pub trait Parameterized<T: Scalar> {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamSlot<'_, T>));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn zero_grads<T: Scalar>(module: &mut impl Parameterized<T>) {
    module.visit_params("", &mut |slot| {
        if let Some(g) = slot.grad {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    });
}

/// Number of trainable scalars.
pub fn count_params<T: Scalar>(module: &mut impl Parameterized<T>) -> usize {
    let mut n = 0;
    module.visit_params("", &mut |slot| {
        if slot.is_trainable() {
            n += slot.value.len();
        }
    });
    n
}

pub fn grad_norm<T: Scalar>(module: &mut impl Parameterized<T>) -> f64 {
    let mut sq = 0.0;
    module.visit_params("", &mut |slot| {
        if let Some(g) = slot.grad {
            sq += g.iter().map(|v| v.f64() * v.f64()).sum::<f64>();
        }
    });
    sq.sqrt()
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(module: &mut impl Parameterized<T>, max_norm: f64) -> f64 {
    let norm = grad_norm(module);
    if norm > max_norm && norm.is_finite() {
        let scale = T::of(max_norm / norm);
        module.visit_params("", &mut |slot| {
            if let Some(g) = slot.grad {
                g.iter_mut().for_each(|v| *v *= scale);
            }
        });
    }
    norm
}
