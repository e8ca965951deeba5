//! Central finite-difference validation of the tape's gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::heads::{LabelTriple, LossWeights};
use crate::layers::InitMode;
use crate::model::{Model, ModelConfig};
use crate::param::ParamStore;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Pass threshold on the maximum relative error of a group.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so gradients that are zero up to
/// round-off do not report spurious failures.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Parameters are grouped by their name without the final component,
/// e.g. `oam.object_proj.weight` and `oam.object_proj.bias` form `oam.object_proj`.
pub fn group_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(g, _)| g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub group: String,
    pub max_rel_error: f64,
    pub num_checked: usize,
}

/// Compares analytic and central-difference gradients of `loss` for every
/// scalar of every parameter. `fault` adds an error to the analytic gradient
/// of one group (for exercising the failure path).
pub fn check_gradients<F>(store: &mut ParamStore<f64>, loss: F, step: f64, fault: Option<&str>) -> Result<Vec<GroupReport>>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let l = loss(&mut g, store)?;
    g.backward_into(l, store)?;
    drop(g);

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(&mut g, s)?;
        Ok(g.value(l).data()[0])
    };

    let mut reports: Vec<GroupReport> = Vec::new();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.get(id).name.clone();
        let group = group_of(&name);
        let mut analytic = store.get(id).grad.clone();
        if fault == Some(group) {
            let a = &mut analytic.data_mut()[0];
            *a += 1e-2 * (1.0 + a.abs());
        }
        let mut worst: f64 = 0.0;
        for j in 0..analytic.numel() {
            let orig = store.get(id).value.data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + step;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig - step;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic.data()[j], numeric);
            if !err.is_finite() {
                return Err(Error::Divergence(name.clone()));
            }
            worst = worst.max(err);
        }
        match reports.iter_mut().find(|r| r.group == group) {
            Some(r) => {
                r.max_rel_error = r.max_rel_error.max(worst);
                r.num_checked += analytic.numel();
            }
            None => reports.push(GroupReport {
                group: group.into(),
                max_rel_error: worst,
                num_checked: analytic.numel(),
            }),
        }
    }
    Ok(reports)
}

/// Random sequence for checking a model: features, object rows and labels.
pub fn random_sequence(config: &ModelConfig, len: usize, rng: &mut Rng) -> Result<(Tensor<f64>, Tensor<f64>, Vec<LabelTriple>)> {
    let features = (0..len * config.feature_dim).map(|_| rng.normal()).collect();
    let objects = (0..len * config.object_categories).map(|_| rng.next_f64()).collect();
    let labels = (0..len)
        .map(|_| {
            if rng.bernoulli(0.2) {
                LabelTriple::BACKGROUND
            } else {
                LabelTriple::action(
                    1 + rng.below(config.heads.verb - 1),
                    1 + rng.below(config.heads.noun - 1),
                    1 + rng.below(config.heads.action - 1),
                )
            }
        })
        .collect();
    Ok((
        Tensor::matrix(len, config.feature_dim, features)?,
        Tensor::matrix(len, config.object_categories, objects)?,
        labels,
    ))
}

/// Checks every parameter group of a randomly initialized 64-bit model on a
/// random sequence of `len` snippets.
pub fn check_model(config: ModelConfig, seed: u64, len: usize, step: f64, fault: Option<&str>) -> Result<Vec<GroupReport>> {
    let mut model = Model::<f64>::new(config, seed, InitMode::Random)?;
    let mut rng = Rng::new(seed).fork(0x6772_6164);
    let (features, objects, labels) = random_sequence(&config, len, &mut rng)?;
    let skeleton = model.clone();
    check_gradients(
        &mut model.params,
        |g, store| skeleton.sequence_loss(g, store, &features, &objects, &labels, LossWeights::default()),
        step,
        fault,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn grouping() {
        assert_eq!(group_of("oam.object_proj.weight"), "oam.object_proj");
        assert_eq!(group_of("x"), "x");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 2.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-12);
        assert!(relative_error(1e-12, 0.0) < 1e-7);
    }

    #[test]
    fn detects_injected_fault() {
        let mut store = ParamStore::<f64>::new();
        store.add("a.w", Tensor::vector(alloc::vec![0.3, -0.7]).unwrap()).unwrap();
        let loss = |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let p = g.param(s, s.find("a.w").unwrap());
            let t = g.tanh(p);
            Ok(g.sum(t))
        };
        let ok = check_gradients(&mut store, loss, DEFAULT_STEP, None).unwrap();
        assert!(ok[0].max_rel_error < 1e-8);
        let bad = check_gradients(&mut store, loss, DEFAULT_STEP, Some("a")).unwrap();
        assert!(bad[0].max_rel_error > DEFAULT_TOLERANCE);
    }
}
