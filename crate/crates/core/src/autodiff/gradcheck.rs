use super::{Graph, ParamId, ParamSet, Var};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Outcome of comparing backprop gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport<S> {
    pub analytic: Vec<S>,
    pub numeric: Vec<S>,
    pub max_relative_error: S,
    pub tolerance: S,
}

impl<S: Scalar> GradCheckReport<S> {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

/// `max |a - n| / max(|a|, |n|, 1e-8)` over paired entries.
pub fn max_relative_error<S: Scalar>(analytic: &[S], numeric: &[S]) -> S {
    let floor = lit::<S>(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(S::zero(), S::max)
}

fn eval<S, F>(params: &ParamSet<S>, build_loss: &F) -> Result<S>
where
    S: Scalar,
    F: for<'g> Fn(&mut Graph<'g, S>) -> Result<Var>,
{
    let mut g = Graph::new(params);
    let loss = build_loss(&mut g)?;
    Ok(g.item(loss))
}

/// Checks every entry of `ids` with central differences `(L(θ+ε) - L(θ-ε)) / 2ε`.
pub fn grad_check<S, F>(
    params: &mut ParamSet<S>,
    ids: &[ParamId],
    build_loss: F,
    epsilon: S,
    tolerance: S,
) -> Result<GradCheckReport<S>>
where
    S: Scalar,
    F: for<'g> Fn(&mut Graph<'g, S>) -> Result<Var>,
{
    if !(epsilon > S::zero()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let first = eval(params, &build_loss)?;
    let second = eval(params, &build_loss)?;
    if first != second {
        return Err(Error::NonDeterministic {
            first: first.to_f64_lossless(),
            second: second.to_f64_lossless(),
        });
    }

    let mut analytic = Vec::new();
    {
        let mut g = Graph::new(&*params);
        let loss = build_loss(&mut g)?;
        g.backward(loss)?;
        for &id in ids {
            analytic.extend_from_slice(g.param_grad(id).data());
        }
    }

    let two_eps = epsilon + epsilon;
    let mut numeric = Vec::with_capacity(analytic.len());
    for &id in ids {
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + epsilon;
            let plus = eval(params, &build_loss);
            params.get_mut(id).data_mut()[j] = orig - epsilon;
            let minus = eval(params, &build_loss);
            params.get_mut(id).data_mut()[j] = orig;
            numeric.push((plus? - minus?) / two_eps);
        }
    }

    let max_relative_error = max_relative_error(&analytic, &numeric);
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_relative_error,
        tolerance,
    })
}
