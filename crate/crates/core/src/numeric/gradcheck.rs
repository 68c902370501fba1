//! Central finite-difference oracle for analytic gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Denominator floor for the relative error; near-zero gradients are
/// compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamStatus {
    Checked { max_rel_error: f64, worst_index: usize },
    /// Not trainable: no analytic gradient exists, nothing was compared.
    Frozen,
}

#[derive(Debug, Clone)]
pub struct ParamReport {
    pub name: String,
    pub status: ParamStatus,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamReport>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tol
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .filter_map(|p| match p.status {
                ParamStatus::Checked { max_rel_error, .. } => Some(max_rel_error),
                ParamStatus::Frozen => None,
            })
            .fold(0.0, f64::max)
    }

    pub fn status(&self, name: &str) -> Option<&ParamStatus> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.status)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let out = f(&mut g)?;
    let t = g.value(out);
    if t.len() != 1 {
        return Err(Error::OracleInvalid(format!(
            "function must be scalar, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.data()[0])
}

/// Compares analytic gradients of the scalar `f` against central
/// differences `(f(θ+h) - f(θ-h)) / 2h` for every entry of every trainable
/// parameter in `store`. Values are restored exactly after each probe.
pub fn finite_diff_check<F>(store: &mut ParamStore, f: F, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&step) {
        return Err(Error::Argument(format!(
            "finite-difference step {step} outside [1e-7, 1e-4]"
        )));
    }
    let base = eval(store, &f)?;
    let again = eval(store, &f)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::OracleInvalid(format!(
            "function is not deterministic ({base} vs {again})"
        )));
    }

    let analytic = {
        let mut g = Graph::new(store);
        let out = f(&mut g)?;
        g.backward(out)?
    };

    let ids: Vec<_> = store.ids().collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let name = store.get(id).name.clone();
        if !store.is_trainable(id) {
            params.push(ParamReport {
                name,
                status: ParamStatus::Frozen,
            });
            continue;
        }
        let n = store.value(id).len();
        let grad = analytic.get(id).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let mut worst = (0.0, 0);
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + step;
            let plus = eval(store, &f);
            store.get_mut(id).value.data_mut()[i] = orig - step;
            let minus = eval(store, &f);
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * step);
            let err = relative_error(grad[i], numeric);
            if err > worst.0 || err.is_nan() {
                worst = (err, i);
            }
        }
        params.push(ParamReport {
            name,
            status: ParamStatus::Checked {
                max_rel_error: worst.0,
                worst_index: worst.1,
            },
        });
    }
    Ok(GradCheckReport { params, tol })
}
