//! Central finite-difference checks of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{zero_grads, Parameterized, Scalar, Tensor};
use crate::error::Result;

/// A differentiable network piece with its own forward cache.
pub trait GradFragment<T: Scalar>: Parameterized<T> {
    /// Train-mode forward; keeps whatever the next backward needs.
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>>;

    /// Backward for the most recent forward. Accumulates parameter
    /// gradients and returns the input gradient.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    /// Discrete state of the last forward (ReLU masks, pooling argmaxes).
    /// A perturbation that changes it crossed a kink and is not compared.
    fn kink_signature(&self) -> Vec<u64> {
        Vec::new()
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Projection seed for the scalar loss `sum(output * R)`.
    pub seed: u64,
    /// Check at most this many coordinates per parameter array and of the
    /// input; `None` checks all of them.
    pub max_coords: Option<usize>,
    pub check_input: bool,
    /// Lower bound on the relative-error denominator, so that exactly-zero
    /// derivatives are compared absolutely.
    pub denom_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            seed: 0,
            max_coords: None,
            check_input: true,
            denom_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a kink.
    pub skipped: usize,
    pub non_finite: bool,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        !self.non_finite && self.checked > 0 && self.max_rel_error < tolerance
    }

    /// Combines reports from several trials.
    pub fn merge(mut self, other: GradCheckReport) -> Self {
        if self.worst.is_none() || other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.non_finite |= other.non_finite;
        self
    }

    fn record(&mut self, name: &str, idx: usize, analytic: f64, numeric: f64, floor: f64) {
        self.checked += 1;
        if !analytic.is_finite() || !numeric.is_finite() {
            self.non_finite = true;
            return;
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if rel > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(rel);
            self.worst = Some((name.to_string(), idx));
        }
    }
}

struct Probe<'a, T: Scalar, F: GradFragment<T>> {
    fragment: &'a mut F,
    projection: Tensor<T>,
    base_signature: Vec<u64>,
}

impl<T: Scalar, F: GradFragment<T>> Probe<'_, T, F> {
    /// Loss at `input`, or `None` if the forward landed on another side of a kink.
    fn loss(&mut self, input: &Tensor<T>) -> Result<Option<f64>> {
        let out = self.fragment.forward(input)?;
        if self.fragment.kink_signature() != self.base_signature {
            return Ok(None);
        }
        Ok(Some(out.dot(&self.projection)?.f64()))
    }

    fn central(&mut self, plus: &Tensor<T>, minus: &Tensor<T>, h: f64) -> Result<Option<f64>> {
        match (self.loss(plus)?, self.loss(minus)?) {
            (Some(a), Some(b)) => Ok(Some((a - b) / (2.0 * h))),
            _ => Ok(None),
        }
    }
}

fn set_param<T: Scalar>(module: &mut impl Parameterized<T>, slot_idx: usize, elem: usize, v: T) {
    let mut i = 0;
    module.visit_params("", &mut |slot| {
        if slot.is_trainable() {
            if i == slot_idx {
                slot.value[elem] = v;
            }
            i += 1;
        }
    });
}

fn pick(n: usize, max: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match max {
        Some(m) if m < n => {
            let mut v = sample(rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..n).collect(),
    }
}

/// Compares analytic gradients of `sum(fragment(input) * R)` with central
/// differences for every (or a sampled subset of) parameter and input
/// coordinate. `R` is a seeded standard-normal projection.
pub fn grad_check<T: Scalar, F: GradFragment<T>>(
    fragment: &mut F,
    input: &Tensor<T>,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    zero_grads(fragment);
    let out = fragment.forward(input)?;
    let projection = Tensor::from_fn(out.length(), out.channels(), |_, _| {
        T::of(StandardNormal.sample(&mut rng))
    });
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
        non_finite: !out.all_finite(),
    };
    if report.non_finite {
        return Ok(report);
    }
    let base_signature = fragment.kink_signature();
    let grad_input = fragment.backward(&projection)?;

    let mut analytic: Vec<(String, Vec<T>, Vec<T>)> = Vec::new();
    fragment.visit_params("", &mut |slot| {
        if let Some(g) = slot.grad {
            analytic.push((slot.name, slot.value.to_vec(), g.to_vec()));
        }
    });

    let h = config.step;
    let mut probe = Probe {
        fragment,
        projection,
        base_signature,
    };
    for (slot_idx, (name, values, grads)) in analytic.iter().enumerate() {
        for elem in pick(values.len(), config.max_coords, &mut rng) {
            let orig = values[elem];
            set_param(probe.fragment, slot_idx, elem, T::of(orig.f64() + h));
            let plus = probe.loss(input)?;
            set_param(probe.fragment, slot_idx, elem, T::of(orig.f64() - h));
            let minus = probe.loss(input)?;
            set_param(probe.fragment, slot_idx, elem, orig);
            match (plus, minus) {
                (Some(a), Some(b)) => report.record(
                    name,
                    elem,
                    grads[elem].f64(),
                    (a - b) / (2.0 * h),
                    config.denom_floor,
                ),
                _ => report.skipped += 1,
            }
        }
    }
    if config.check_input {
        for elem in pick(input.data().len(), config.max_coords, &mut rng) {
            let mut plus = input.clone();
            let mut minus = input.clone();
            plus.data_mut()[elem] += T::of(h);
            minus.data_mut()[elem] -= T::of(h);
            match probe.central(&plus, &minus, h)? {
                Some(n) => report.record(
                    "input",
                    elem,
                    grad_input.data()[elem].f64(),
                    n,
                    config.denom_floor,
                ),
                None => report.skipped += 1,
            }
        }
    }
    Ok(report)
}
