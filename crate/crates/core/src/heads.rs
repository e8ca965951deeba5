//! Max pooling over refined queries and the three action classifiers.

use alloc::format;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::{Initializer, Linear};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::{self, Tensor};

/// Index 0 of every head is the background class.
pub const BACKGROUND: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelTriple {
    pub verb: usize,
    pub noun: usize,
    pub action: usize,
    pub background: bool,
}

impl LabelTriple {
    pub const BACKGROUND: LabelTriple = LabelTriple {
        verb: BACKGROUND,
        noun: BACKGROUND,
        action: BACKGROUND,
        background: true,
    };

    pub fn action(verb: usize, noun: usize, action: usize) -> Self {
        LabelTriple {
            verb,
            noun,
            action,
            background: false,
        }
    }

    pub fn validate(&self, sizes: &HeadSizes) -> Result<()> {
        if self.background && (self.verb, self.noun, self.action) != (0, 0, 0) {
            return Err(Error::Data(format!("background label {self:?} must use id 0 in every head")));
        }
        if !self.background && (self.verb == 0 || self.noun == 0 || self.action == 0) {
            return Err(Error::Data(format!("non-background label {self:?} uses the background id")));
        }
        for (id, n, head) in [
            (self.verb, sizes.verb, "verb"),
            (self.noun, sizes.noun, "noun"),
            (self.action, sizes.action, "action"),
        ] {
            if id >= n {
                return Err(Error::Data(format!("{head} label {id} out of range for {n} classes")));
            }
        }
        Ok(())
    }
}

/// Class counts per head, background included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadSizes {
    pub verb: usize,
    pub noun: usize,
    pub action: usize,
}

impl HeadSizes {
    /// 97 verbs, 300 nouns and 3806 actions, each plus background.
    pub const EPIC_KITCHENS: HeadSizes = HeadSizes {
        verb: 98,
        noun: 301,
        action: 3807,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Head {
    Verb,
    Noun,
    Action,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Verb, Head::Noun, Head::Action];

    pub fn name(self) -> &'static str {
        match self {
            Head::Verb => "verb",
            Head::Noun => "noun",
            Head::Action => "action",
        }
    }

    pub fn label(self, l: &LabelTriple) -> usize {
        match self {
            Head::Verb => l.verb,
            Head::Noun => l.noun,
            Head::Action => l.action,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs<T = f32> {
    pub verb_logits: Tensor<T>,
    pub noun_logits: Tensor<T>,
    pub action_logits: Tensor<T>,
}

impl<T: Scalar> HeadOutputs<T> {
    pub fn get(&self, head: Head) -> &Tensor<T> {
        match head {
            Head::Verb => &self.verb_logits,
            Head::Noun => &self.noun_logits,
            Head::Action => &self.action_logits,
        }
    }
}

/// Graph nodes of the three logit vectors.
#[derive(Debug, Clone, Copy)]
pub struct HeadNodes {
    pub verb: NodeId,
    pub noun: NodeId,
    pub action: NodeId,
}

#[derive(Debug, Clone)]
pub struct Classifiers {
    pub verb: Linear,
    pub noun: Linear,
    pub action: Linear,
    pub dim: usize,
    pub sizes: HeadSizes,
}

impl Classifiers {
    pub fn new<T: Scalar>(init: &mut Initializer<'_, T>, name: &str, dim: usize, sizes: HeadSizes) -> Result<Self> {
        Ok(Classifiers {
            verb: init.linear(&format!("{name}.verb"), dim, sizes.verb)?,
            noun: init.linear(&format!("{name}.noun"), dim, sizes.noun)?,
            action: init.linear(&format!("{name}.action"), dim, sizes.action)?,
            dim,
            sizes,
        })
    }

    /// Three independent affine maps of a pooled `[d]` vector.
    pub fn classify_graph<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, pooled: NodeId) -> Result<HeadNodes> {
        if g.value(pooled).numel() != self.dim {
            return Err(Error::dim("classify", g.value(pooled).shape(), &[self.dim]));
        }
        Ok(HeadNodes {
            verb: self.verb.forward(g, store, pooled)?,
            noun: self.noun.forward(g, store, pooled)?,
            action: self.action.forward(g, store, pooled)?,
        })
    }

    pub fn classify<T: Scalar>(&self, store: &ParamStore<T>, pooled: &Tensor<T>) -> Result<HeadOutputs<T>> {
        let mut g = Graph::new();
        let p = g.input(pooled.clone());
        let n = self.classify_graph(&mut g, store, p)?;
        Ok(outputs(&g, n))
    }
}

/// Reads the logits of `nodes` out of a graph as flat vectors.
pub fn outputs<T: Scalar>(g: &Graph<T>, nodes: HeadNodes) -> HeadOutputs<T> {
    let flat = |id| {
        let v: &Tensor<T> = g.value(id);
        v.reshape(&[v.numel()]).expect("non-empty logits")
    };
    HeadOutputs {
        verb_logits: flat(nodes.verb),
        noun_logits: flat(nodes.noun),
        action_logits: flat(nodes.action),
    }
}

/// Loss weights of the verb, noun and action heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights(pub [f64; 3]);

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights([1.0, 1.0, 1.0])
    }
}

/// Weighted sum of the three cross-entropies, recorded on the graph.
pub fn loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    nodes: HeadNodes,
    label: &LabelTriple,
    weights: LossWeights,
) -> Result<NodeId> {
    let v = g.cross_entropy(nodes.verb, label.verb)?;
    let n = g.cross_entropy(nodes.noun, label.noun)?;
    let a = g.cross_entropy(nodes.action, label.action)?;
    let [wv, wn, wa] = weights.0;
    let v = g.scale(v, T::from_f64(wv));
    let n = g.scale(n, T::from_f64(wn));
    let a = g.scale(a, T::from_f64(wa));
    let vn = g.add(v, n)?;
    g.add(vn, a)
}

/// `out[j] = max_i q[i][j]`.
pub fn max_pool_queries<T: Scalar>(q: &Tensor<T>) -> Tensor<T> {
    tensor::max_pool_rows(q).0
}

/// Sum of the three head cross-entropies with equal weights.
pub fn loss<T: Scalar>(outputs: &HeadOutputs<T>, label: &LabelTriple) -> Result<T> {
    let mut g = Graph::new();
    let nodes = HeadNodes {
        verb: g.input(outputs.verb_logits.clone()),
        noun: g.input(outputs.noun_logits.clone()),
        action: g.input(outputs.action_logits.clone()),
    };
    let l = loss_graph(&mut g, nodes, label, LossWeights::default())?;
    Ok(g.value(l).data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::InitMode;
    use crate::rng::Rng;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn max_pool_examples() {
        let q = Tensor::<f32>::from_rows(&[&[1.0, 2.0], &[3.0, 0.0]]).unwrap();
        assert_eq!(max_pool_queries(&q).data(), &[3.0, 2.0]);
        let one = Tensor::<f32>::from_rows(&[&[4.0, -1.0, 2.5]]).unwrap();
        assert_eq!(max_pool_queries(&one).data(), one.data());
    }

    #[test]
    fn max_pool_gradient_goes_to_lowest_argmax() {
        let mut store = ParamStore::<f64>::new();
        let q = store
            .add("q", Tensor::from_rows(&[&[1.0, 5.0], &[1.0, 2.0]]).unwrap())
            .unwrap();
        let mut g = Graph::new();
        let n = g.param(&store, q);
        let p = g.max_pool_rows(n);
        let s = g.sum(p);
        g.backward_into(s, &mut store).unwrap();
        assert_eq!(store.get(q).grad.data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    fn heads(sizes: HeadSizes, dim: usize, seed: u64) -> (ParamStore<f64>, Classifiers) {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(&mut store, Rng::new(seed), InitMode::Random);
        let c = Classifiers::new(&mut init, "heads", dim, sizes).unwrap();
        (store, c)
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let sizes = HeadSizes { verb: 3, noun: 4, action: 5 };
        let (mut store, c) = heads(sizes, 6, 1);
        for p in store.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let out = c.classify(&store, &Tensor::full(&[6], 1.5)).unwrap();
        assert_eq!(out.verb_logits.data(), &[0.0; 3]);
        assert_eq!(out.noun_logits.data(), &[0.0; 4]);
        assert_eq!(out.action_logits.data(), &[0.0; 5]);
        assert!(matches!(
            c.classify(&store, &Tensor::full(&[5], 1.0)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn epic_kitchens_lengths() {
        let (store, c) = heads(HeadSizes::EPIC_KITCHENS, 8, 2);
        let out = c.classify(&store, &Tensor::full(&[8], 0.1)).unwrap();
        assert_eq!(out.verb_logits.numel(), 98);
        assert_eq!(out.noun_logits.numel(), 301);
        assert_eq!(out.action_logits.numel(), 3807);
    }

    #[test]
    fn classify_matches_scalar_oracle() {
        let sizes = HeadSizes { verb: 3, noun: 2, action: 4 };
        let (store, c) = heads(sizes, 5, 3);
        let mut rng = Rng::new(4);
        let pooled: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let out = c.classify(&store, &Tensor::vector(pooled.clone()).unwrap()).unwrap();
        for (lin, logits) in [(c.verb, &out.verb_logits), (c.noun, &out.noun_logits), (c.action, &out.action_logits)] {
            let w = store.value(lin.w);
            let b = store.value(lin.b);
            for j in 0..lin.fan_out {
                let mut s = b.data()[j];
                for i in 0..5 {
                    s += pooled[i] * w.at(i, j);
                }
                assert!((logits.data()[j] - s).abs() < 1e-6);
            }
        }
    }

    fn outs(v: Vec<f64>, n: Vec<f64>, a: Vec<f64>) -> HeadOutputs<f64> {
        HeadOutputs {
            verb_logits: Tensor::vector(v).unwrap(),
            noun_logits: Tensor::vector(n).unwrap(),
            action_logits: Tensor::vector(a).unwrap(),
        }
    }

    #[test]
    fn loss_examples() {
        let o = outs(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]);
        let l = loss(&o, &LabelTriple::action(1, 1, 1)).unwrap();
        assert!((l - 3.0 * core::f64::consts::LN_2).abs() < 1e-6);

        let o = outs(vec![0.0, 1000.0, 0.0], vec![1000.0, 0.0], vec![0.0, 0.0, 1000.0]);
        let l = loss(&o, &LabelTriple { verb: 1, noun: 0, action: 2, background: false }).unwrap();
        assert!(l < 1e-6);

        let err = loss(&o, &LabelTriple::action(3, 1, 1));
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn loss_matches_scalar_oracle() {
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let draw = |rng: &mut Rng, n| (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect::<Vec<f64>>();
            let o = outs(draw(&mut rng, 4), draw(&mut rng, 6), draw(&mut rng, 9));
            let label = LabelTriple::action(1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(8));
            let ce = |l: &[f64], t: usize| {
                let z: f64 = l.iter().map(|v| v.exp()).sum();
                z.ln() - l[t]
            };
            let want = ce(o.verb_logits.data(), label.verb)
                + ce(o.noun_logits.data(), label.noun)
                + ce(o.action_logits.data(), label.action);
            let got = loss(&o, &label).unwrap();
            assert!(got >= 0.0);
            assert!((got - want).abs() < 1e-6 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn label_validation() {
        let sizes = HeadSizes { verb: 3, noun: 3, action: 5 };
        assert!(LabelTriple::BACKGROUND.validate(&sizes).is_ok());
        assert!(LabelTriple::action(1, 2, 4).validate(&sizes).is_ok());
        assert!(LabelTriple::action(3, 1, 1).validate(&sizes).is_err());
        assert!(LabelTriple::action(0, 1, 1).validate(&sizes).is_err());
        let bad_bg = LabelTriple { verb: 1, ..LabelTriple::BACKGROUND };
        assert!(bad_bg.validate(&sizes).is_err());
    }
}
