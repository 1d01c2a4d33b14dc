//! Parametric vector fields `f(z, t, θ)` with reverse-mode vector-Jacobian
//! products.
//!
//! Field authors implement [`Dynamics`] (evaluation) and, when the field is
//! used for gradients, [`VectorField`] (VJPs). The raw trait methods write
//! into caller-provided buffers and are unchecked; the free functions
//! [`eval`], [`vjp_z`], [`vjp_theta`] and [`vjp`] validate dimensions, reject
//! non-finite output and bump an [`EvalCounter`].

mod mlp;
mod weights;

use std::ops::Deref;

use crate::error::{Error, Result};

pub use mlp::MlpField;
pub use weights::MlpWeights;

/// ODE state `z`. All components are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec(Vec<f64>);

impl StateVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|x| x.is_finite()) {
            Ok(StateVec(values))
        } else {
            Err(Error::NonFinite {
                stage: "state construction",
                t: f64::NAN,
                z: values,
            })
        }
    }

    pub fn zeros(dim: usize) -> Self {
        StateVec(vec![0.0; dim])
    }

    /// Wraps values already known to be finite.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|x| x.is_finite()));
        StateVec(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }
}

impl Deref for StateVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for StateVec {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        StateVec::new(v)
    }
}

/// Flat parameter vector θ. For [`MlpField`] the layout is layer-major; each
/// layer stores its row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVec(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVec(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVec {
    fn from(v: Vec<f64>) -> Self {
        ParamVec(v)
    }
}

/// Caller-owned instrumentation. `eval_units` accumulates the abstract cost
/// of each evaluation (the field's [`Dynamics::eval_units`]).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounter {
    pub evals: u64,
    pub eval_units: u64,
    pub vjps: u64,
}

/// Something that can be evaluated as the right-hand side of an ODE.
pub trait Dynamics: Sync {
    fn dim_state(&self) -> usize;

    fn dim_params(&self) -> usize;

    /// Abstract cost of one evaluation, in units of `dim_state` scalars of
    /// working memory (the number of layers for an MLP).
    fn eval_units(&self) -> usize {
        1
    }

    fn eval_into(&self, z: &[f64], t: f64, theta: &[f64], out: &mut [f64]);
}

/// A differentiable field: reverse-mode products with respect to `z` and `θ`.
pub trait VectorField: Dynamics {
    /// Writes `(∂f/∂z)ᵀ a` into `grad_z` and `(∂f/∂θ)ᵀ a` into `grad_theta`.
    fn vjp_into(
        &self,
        z: &[f64],
        t: f64,
        theta: &[f64],
        a: &[f64],
        grad_z: &mut [f64],
        grad_theta: &mut [f64],
    );
}

/// Closed-form flow, used by the order studies.
pub trait ExactFlow: Dynamics {
    fn exact(&self, z0: &[f64], t0: f64, t: f64, theta: &[f64]) -> Vec<f64>;
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

fn check_inputs<F: Dynamics + ?Sized>(field: &F, z: &[f64], theta: &[f64]) -> Result<()> {
    check_dim("state", field.dim_state(), z.len())?;
    check_dim("parameters", field.dim_params(), theta.len())
}

fn finite_or(stage: &'static str, values: &[f64], t: f64, z: &[f64]) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            stage,
            t,
            z: z.to_vec(),
        })
    }
}

/// Evaluates `f(z, t, θ)`.
pub fn eval<F: Dynamics + ?Sized>(
    field: &F,
    z: &[f64],
    t: f64,
    theta: &[f64],
    counter: &mut EvalCounter,
) -> Result<StateVec> {
    check_inputs(field, z, theta)?;
    let mut out = vec![0.0; field.dim_state()];
    field.eval_into(z, t, theta, &mut out);
    counter.evals += 1;
    counter.eval_units += field.eval_units() as u64;
    finite_or("field evaluation", &out, t, z)?;
    Ok(StateVec::from_finite(out))
}

/// Both products at once: `((∂f/∂z)ᵀ a, (∂f/∂θ)ᵀ a)`.
pub fn vjp<F: VectorField + ?Sized>(
    field: &F,
    z: &[f64],
    t: f64,
    theta: &[f64],
    a: &[f64],
    counter: &mut EvalCounter,
) -> Result<(StateVec, ParamVec)> {
    check_inputs(field, z, theta)?;
    check_dim("adjoint", field.dim_state(), a.len())?;
    let mut gz = vec![0.0; field.dim_state()];
    let mut gth = vec![0.0; field.dim_params()];
    field.vjp_into(z, t, theta, a, &mut gz, &mut gth);
    counter.vjps += 1;
    finite_or("vjp", &gz, t, z)?;
    finite_or("vjp", &gth, t, z)?;
    Ok((StateVec::from_finite(gz), ParamVec(gth)))
}

pub fn vjp_z<F: VectorField + ?Sized>(
    field: &F,
    z: &[f64],
    t: f64,
    theta: &[f64],
    a: &[f64],
    counter: &mut EvalCounter,
) -> Result<StateVec> {
    vjp(field, z, t, theta, a, counter).map(|(gz, _)| gz)
}

pub fn vjp_theta<F: VectorField + ?Sized>(
    field: &F,
    z: &[f64],
    t: f64,
    theta: &[f64],
    a: &[f64],
    counter: &mut EvalCounter,
) -> Result<ParamVec> {
    vjp(field, z, t, theta, a, counter).map(|(_, gth)| gth)
}

pub(crate) fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `f(z, t, θ) = α z` with `θ = [α]`, applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearScalarField {
    dim: usize,
}

impl LinearScalarField {
    pub fn new() -> Self {
        LinearScalarField { dim: 1 }
    }

    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "state dimension must be positive");
        LinearScalarField { dim }
    }
}

impl Default for LinearScalarField {
    fn default() -> Self {
        Self::new()
    }
}

impl Dynamics for LinearScalarField {
    fn dim_state(&self) -> usize {
        self.dim
    }
    fn dim_params(&self) -> usize {
        1
    }
    fn eval_into(&self, z: &[f64], _t: f64, theta: &[f64], out: &mut [f64]) {
        let alpha = theta[0];
        for (o, zi) in out.iter_mut().zip(z) {
            *o = alpha * zi;
        }
    }
}

impl VectorField for LinearScalarField {
    fn vjp_into(
        &self,
        z: &[f64],
        _t: f64,
        theta: &[f64],
        a: &[f64],
        grad_z: &mut [f64],
        grad_theta: &mut [f64],
    ) {
        let alpha = theta[0];
        for (g, ai) in grad_z.iter_mut().zip(a) {
            *g = alpha * ai;
        }
        grad_theta[0] = a.iter().zip(z).map(|(ai, zi)| ai * zi).sum();
    }
}

impl ExactFlow for LinearScalarField {
    fn exact(&self, z0: &[f64], t0: f64, t: f64, theta: &[f64]) -> Vec<f64> {
        let growth = (theta[0] * (t - t0)).exp();
        z0.iter().map(|z| z * growth).collect()
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroField {
    pub dim: usize,
}

impl Dynamics for ZeroField {
    fn dim_state(&self) -> usize {
        self.dim
    }
    fn dim_params(&self) -> usize {
        0
    }
    fn eval_into(&self, _z: &[f64], _t: f64, _theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl VectorField for ZeroField {
    fn vjp_into(
        &self,
        _z: &[f64],
        _t: f64,
        _theta: &[f64],
        _a: &[f64],
        grad_z: &mut [f64],
        _grad_theta: &mut [f64],
    ) {
        grad_z.fill(0.0);
    }
}

impl ExactFlow for ZeroField {
    fn exact(&self, z0: &[f64], _t0: f64, _t: f64, _theta: &[f64]) -> Vec<f64> {
        z0.to_vec()
    }
}

/// `f ≡ c`, independent of state, time and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField {
    pub value: Vec<f64>,
}

impl Dynamics for ConstantField {
    fn dim_state(&self) -> usize {
        self.value.len()
    }
    fn dim_params(&self) -> usize {
        0
    }
    fn eval_into(&self, _z: &[f64], _t: f64, _theta: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
}

impl VectorField for ConstantField {
    fn vjp_into(
        &self,
        _z: &[f64],
        _t: f64,
        _theta: &[f64],
        _a: &[f64],
        grad_z: &mut [f64],
        _grad_theta: &mut [f64],
    ) {
        grad_z.fill(0.0);
    }
}

impl ExactFlow for ConstantField {
    fn exact(&self, z0: &[f64], t0: f64, t: f64, _theta: &[f64]) -> Vec<f64> {
        z0.iter()
            .zip(&self.value)
            .map(|(z, c)| z + c * (t - t0))
            .collect()
    }
}
