//! Gradients, Hessian-vector products, and meta-gradients through gradient
//! steps.
//!
//! A meta-objective of the form `h(θ, θ_K)` with
//! `θ_{k+1} = θ_k − α ∇g(θ_k)` has gradient
//! `∂₁h + (I − α H_g(θ_0)) ⋯ (I − α H_g(θ_{K−1})) ∂₂h`, because each step's
//! Jacobian is symmetric. Every Hessian factor is applied as a
//! Hessian-vector product on a dual-number tape, so the result is exact to
//! floating point without forming any Hessian.

use super::scalar::{Dual, Scalar};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// A scalar function of a flat parameter vector, evaluable at any scalar type.
pub trait ParamFn {
    fn eval<S: Scalar>(&self, params: &[S]) -> Result<S>;
}

/// A scalar function of the base parameters and the adapted parameters.
pub trait OuterFn {
    fn eval<S: Scalar>(&self, base: &[S], adapted: &[S]) -> Result<S>;
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Value and gradient by one reverse sweep.
pub fn value_and_grad<F: ParamFn>(f: &F, at: &[f64]) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::<f64>::new();
    let leaves = tape.vars(at);
    let out = f.eval(&leaves)?;
    let value = out.value();
    if !value.is_finite() {
        return Err(Error::NonFinite("objective value"));
    }
    let grad = tape.gradient(out, &leaves);
    check_finite(&grad, "gradient")?;
    Ok((value, grad))
}

/// Gradient only.
pub fn grad<F: ParamFn>(f: &F, at: &[f64]) -> Result<Vec<f64>> {
    value_and_grad(f, at).map(|(_, g)| g)
}

/// Hessian-vector product `∇²f(at)·v` by forward-over-reverse.
pub fn hessian_vector<F: ParamFn>(f: &F, at: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if at.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "hessian_vector direction",
            expected: at.len(),
            got: v.len(),
        });
    }
    let tape = Tape::<Dual>::new();
    let seeds: Vec<Dual> = at.iter().zip(v).map(|(&x, &d)| Dual::new(x, d)).collect();
    let leaves = tape.vars(&seeds);
    let out = f.eval(&leaves)?;
    let g = tape.gradient(out, &leaves);
    let hv: Vec<f64> = g.iter().map(|d| d.eps).collect();
    check_finite(&hv, "Hessian-vector product")?;
    Ok(hv)
}

/// Central finite-difference gradient on selected coordinates. An oracle for
/// checks, independent of the tape.
pub fn finite_difference_grad<F: ParamFn>(
    f: &F,
    at: &[f64],
    coords: &[usize],
    h: f64,
) -> Result<Vec<f64>> {
    let mut x = at.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + h;
            let up: f64 = f.eval(&x)?;
            x[i] = orig - h;
            let down: f64 = f.eval(&x)?;
            x[i] = orig;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Inner adaptation: `steps` gradient steps of size `alpha` on `loss`.
/// Returns the visited iterates `[θ_0, …, θ_steps]` and the inner loss at each
/// step taken.
pub fn inner_trajectory<F: ParamFn>(
    loss: &F,
    params: &[f64],
    alpha: f64,
    steps: usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut iterates = vec![params.to_vec()];
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let current = iterates.last().unwrap();
        let (value, g) = value_and_grad(loss, current)?;
        losses.push(value);
        let next: Vec<f64> = current
            .iter()
            .zip(&g)
            .map(|(&t, &gi)| t - alpha * gi)
            .collect();
        iterates.push(next);
    }
    Ok((iterates, losses))
}

/// `θ − α∇L(θ)` applied `steps` times.
pub fn inner_update<F: ParamFn>(loss: &F, params: &[f64], alpha: f64, steps: usize) -> Result<Vec<f64>> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::invalid("alpha", format!("must be finite and >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(params.to_vec());
    }
    let (mut iterates, _) = inner_trajectory(loss, params, alpha, steps)?;
    Ok(iterates.pop().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaOrder {
    /// Treat the adapted parameters as a constant shift of θ.
    First,
    /// Differentiate through the inner gradient steps.
    #[default]
    Second,
}

#[derive(Debug, Clone)]
pub struct MetaGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub adapted: Vec<f64>,
    pub inner_losses: Vec<f64>,
}

/// Gradient of `outer(θ, θ_K)` where `θ_K` is reached from `θ` by `steps`
/// inner gradient steps on `inner`.
pub fn meta_gradient<G: ParamFn, H: OuterFn>(
    inner: &G,
    outer: &H,
    theta: &[f64],
    alpha: f64,
    steps: usize,
    order: MetaOrder,
) -> Result<MetaGradient> {
    let (iterates, inner_losses) = if alpha == 0.0 {
        (vec![theta.to_vec()], Vec::new())
    } else {
        inner_trajectory(inner, theta, alpha, steps)?
    };
    let adapted = iterates.last().unwrap().clone();

    let tape = Tape::<f64>::new();
    let base = tape.vars(theta);
    let adapted_leaves = tape.vars(&adapted);
    let out = outer.eval(&base, &adapted_leaves)?;
    let loss = out.value();
    if !loss.is_finite() {
        return Err(Error::NonFinite("outer loss"));
    }
    let adj = tape.adjoints(out);
    let pick = |vs: &[Var<'_, f64>]| -> Vec<f64> {
        vs.iter()
            .map(|v| v.tape_index().map_or(0.0, |i| adj[i]))
            .collect()
    };
    let direct = pick(&base);
    let mut through = pick(&adapted_leaves);

    if order == MetaOrder::Second && alpha != 0.0 {
        for theta_k in iterates[..iterates.len() - 1].iter().rev() {
            let hv = hessian_vector(inner, theta_k, &through)?;
            for (t, h) in through.iter_mut().zip(&hv) {
                *t -= alpha * h;
            }
        }
    }
    let grad: Vec<f64> = direct.iter().zip(&through).map(|(a, b)| a + b).collect();
    check_finite(&grad, "meta-gradient")?;
    Ok(MetaGradient {
        loss,
        grad,
        adapted,
        inner_losses,
    })
}
