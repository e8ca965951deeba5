//! Analytic gradients of every primitive and of the full pipeline against
//! central finite differences in 64-bit mode.

use oad_core::gradcheck::{check_gradients, check_model, DEFAULT_STEP, DEFAULT_TOLERANCE};
use oad_core::heads::HeadSizes;
use oad_core::model::{CueMode, Integration, ModelConfig};
use oad_core::oam::OAConfig;
use oad_core::objects::Aggregation;
use oad_core::{Graph, NodeId, ParamStore, Result, Rng, Tensor};

fn tiny(integration: Integration) -> ModelConfig {
    ModelConfig {
        feature_dim: 6,
        hidden_dim: 8,
        object_categories: 5,
        heads: HeadSizes { verb: 6, noun: 7, action: 8 },
        oam: OAConfig {
            num_queries: 4,
            embed_dim: 8,
            num_heads: 2,
            ..OAConfig::toy()
        },
        cues: CueMode::LastK(4),
        integration,
        concat_dim: 3,
        aggregation: Aggregation::Max,
    }
}

fn random_param(store: &mut ParamStore<f64>, rng: &mut Rng, name: &str, shape: &[usize]) {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    store.add(name, Tensor::new(shape.to_vec(), data).unwrap()).unwrap();
}

fn assert_pass(store: &mut ParamStore<f64>, loss: impl Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>) {
    let reports = check_gradients(store, loss, DEFAULT_STEP, None).unwrap();
    for r in reports {
        assert!(r.max_rel_error < DEFAULT_TOLERANCE, "{}: {}", r.group, r.max_rel_error);
    }
}

/// Weighted sum so every output entry gets a distinct upstream gradient.
fn weighted_sum(g: &mut Graph<f64>, x: NodeId, rng_seed: u64) -> NodeId {
    let shape = g.value(x).shape().to_vec();
    let mut rng = Rng::new(rng_seed);
    let n: usize = shape.iter().product();
    let w = g.input(Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap());
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

#[test]
fn primitives_over_many_seeds() {
    for seed in 0..100u64 {
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        random_param(&mut store, &mut rng, "a.x", &[3, 4]);
        random_param(&mut store, &mut rng, "b.x", &[4, 4]);
        random_param(&mut store, &mut rng, "c.x", &[2, 4]);
        random_param(&mut store, &mut rng, "ln.gamma", &[4]);
        random_param(&mut store, &mut rng, "ln.beta", &[4]);
        random_param(&mut store, &mut rng, "bias.x", &[4]);
        let target = rng.below(4);
        assert_pass(&mut store, |g, s| {
            let a = g.param(s, s.find("a.x").unwrap());
            let b = g.param(s, s.find("b.x").unwrap());
            let c = g.param(s, s.find("c.x").unwrap());
            let gamma = g.param(s, s.find("ln.gamma").unwrap());
            let beta = g.param(s, s.find("ln.beta").unwrap());
            let bias = g.param(s, s.find("bias.x").unwrap());

            let ab = g.matmul(a, b)?;
            let ab = g.add_bias(ab, bias)?;
            let n = g.layer_norm(ab, gamma, beta, 1e-5)?;
            let att = g.attention(c, n, ab, 2)?;
            let sm = g.softmax_rows(att);
            let ge = g.gelu(n);
            let th = g.tanh(att);
            let sg = g.sigmoid(c);
            let mixed = g.mul(th, sg)?;
            let diff = g.sub(mixed, sm)?;
            let ct = g.transpose(c)?;
            let cc = g.matmul(ct, diff)?;
            let cat = g.concat_rows(&[ge, cc])?;
            let cat2 = g.concat_cols(&[cat, cat])?;
            let pooled = g.max_pool_rows(cat2);
            let r = g.reshape(pooled, &[1, 8])?;
            let ce = g.cross_entropy(r, target)?;
            let ws = weighted_sum(g, cat2, seed);
            let scaled = g.scale(ws, 0.5);
            g.add(ce, scaled)
        });
    }
}

#[test]
fn full_pipeline_every_group_every_mode() {
    for mode in Integration::ALL {
        let reports = check_model(tiny(mode), 17, 6, DEFAULT_STEP, None).unwrap();
        assert!(!reports.is_empty());
        for r in &reports {
            assert!(
                r.max_rel_error < DEFAULT_TOLERANCE,
                "{mode:?} {}: {}",
                r.group,
                r.max_rel_error
            );
        }
    }
}

#[test]
fn positional_encodings_and_final_cues() {
    let mut cfg = tiny(Integration::OaModule);
    cfg.oam.positional_encoding = true;
    cfg.oam.self_attention = false;
    cfg.cues = CueMode::Final;
    for r in check_model(cfg, 3, 5, DEFAULT_STEP, None).unwrap() {
        assert!(r.max_rel_error < DEFAULT_TOLERANCE, "{}: {}", r.group, r.max_rel_error);
    }
}

#[test]
fn injected_fault_is_reported_for_its_group() {
    let reports = check_model(tiny(Integration::OaModule), 1, 4, DEFAULT_STEP, Some("oam.object_proj")).unwrap();
    for r in reports {
        if r.group == "oam.object_proj" {
            assert!(r.max_rel_error >= DEFAULT_TOLERANCE);
        } else {
            assert!(r.max_rel_error < DEFAULT_TOLERANCE, "{}", r.group);
        }
    }
}
