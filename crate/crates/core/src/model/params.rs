use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fusion::{EventVocab, FusionVars};
use crate::rng::SeededRng;
use crate::tensor::{Tape, Tensor, Var};

use super::ModelConfig;

const INIT_STD: f64 = 0.02;

/// How a parameter is initialized and whether weight decay applies to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    NormScale,
    NormShift,
    Embedding,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Embedding)
    }
}

/// Ordered, named collection of learned tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    kinds: Vec<ParamKind>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    fn new() -> Self {
        Self { names: vec![], kinds: vec![], tensors: vec![], index: HashMap::new() }
    }

    fn push(&mut self, name: String, kind: ParamKind, t: Tensor) {
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.kinds.push(kind);
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ParamKind] {
        &self.kinds
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replace every tensor, keeping names and shapes.
    pub fn set_all(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        if tensors.len() != self.tensors.len()
            || tensors.iter().zip(&self.tensors).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Config("parameter list does not match model layout".into()));
        }
        self.tensors = tensors;
        Ok(())
    }
}

/// Learned parameters of the classifier, including event-fusion tables.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub vocab: EventVocab,
    pub params: ParamSet,
}

#[derive(Clone, Copy, Debug)]
pub struct AttnVars {
    pub qkv_w: Var,
    pub qkv_b: Var,
    pub out_w: Var,
    pub out_b: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub ln_time: (Var, Var),
    pub time: AttnVars,
    pub ln_space: (Var, Var),
    pub space: AttnVars,
    pub ln_mlp: (Var, Var),
    pub fc1: (Var, Var),
    pub fc2: (Var, Var),
}

/// Every parameter of a [`ModelWeights`] recorded on one tape.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub patch: (Var, Var),
    pub cls: Var,
    pub pos_space: Var,
    pub pos_time: Var,
    pub blocks: Vec<BlockVars>,
    pub norm: (Var, Var),
    pub head: (Var, Var),
    pub fusion: FusionVars,
    /// Handles in `ParamSet` order, for reading gradients back.
    pub all: Vec<Var>,
}

impl ModelWeights {
    /// Fresh weights: N(0, 0.02²) for projections and positional tables,
    /// N(0, 1) for event embeddings, zero biases, unit norm scales.
    pub fn init(config: &ModelConfig, vocab: &EventVocab, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let mut p = ParamSet::new();
        let d = config.d_model;
        let mut normal = |shape: &[usize], std: f64| Tensor::from_fn(shape, |_| rng.normal(0.0, std));
        let mut layout = Vec::new();
        layout_entries(config, vocab, &mut layout);
        for (name, kind, shape) in layout {
            let t = match kind {
                ParamKind::Weight => normal(&shape, INIT_STD),
                ParamKind::Embedding => normal(&shape, 1.0),
                ParamKind::Bias | ParamKind::NormShift => Tensor::zeros(&shape),
                ParamKind::NormScale => Tensor::filled(&shape, 1.0),
            };
            p.push(name, kind, t);
        }
        debug_assert_eq!(p.get("cls").unwrap().shape(), &[1, d]);
        Ok(Self { config: config.clone(), vocab: vocab.clone(), params: p })
    }

    /// All-zero weights (norm scales included) with the standard layout.
    pub fn zeros(config: &ModelConfig, vocab: &EventVocab) -> Result<Self> {
        config.validate()?;
        let mut p = ParamSet::new();
        let mut layout = Vec::new();
        layout_entries(config, vocab, &mut layout);
        for (name, kind, shape) in layout {
            p.push(name, kind, Tensor::zeros(&shape));
        }
        Ok(Self { config: config.clone(), vocab: vocab.clone(), params: p })
    }

    /// Record every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> ModelVars {
        let all: Vec<Var> = self.params.tensors().iter().map(|t| tape.leaf(t.clone(), requires_grad)).collect();
        self.vars_from(all)
    }

    /// Structure handles already recorded on a tape, one per parameter in `ParamSet` order.
    pub fn vars_from(&self, all: Vec<Var>) -> ModelVars {
        assert_eq!(all.len(), self.params.len(), "one handle per parameter");
        let v = |name: &str| all[self.params.position(name).unwrap_or_else(|| panic!("missing parameter {name}"))];
        let attn = |prefix: &str| AttnVars {
            qkv_w: v(&format!("{prefix}.qkv.w")),
            qkv_b: v(&format!("{prefix}.qkv.b")),
            out_w: v(&format!("{prefix}.out.w")),
            out_b: v(&format!("{prefix}.out.b")),
        };
        let blocks = (0..self.config.n_layers)
            .map(|l| {
                let p = format!("blocks.{l}");
                BlockVars {
                    ln_time: (v(&format!("{p}.ln_time.g")), v(&format!("{p}.ln_time.b"))),
                    time: attn(&format!("{p}.time_attn")),
                    ln_space: (v(&format!("{p}.ln_space.g")), v(&format!("{p}.ln_space.b"))),
                    space: attn(&format!("{p}.space_attn")),
                    ln_mlp: (v(&format!("{p}.ln_mlp.g")), v(&format!("{p}.ln_mlp.b"))),
                    fc1: (v(&format!("{p}.mlp.fc1.w")), v(&format!("{p}.mlp.fc1.b"))),
                    fc2: (v(&format!("{p}.mlp.fc2.w")), v(&format!("{p}.mlp.fc2.b"))),
                }
            })
            .collect();
        ModelVars {
            patch: (v("patch.w"), v("patch.b")),
            cls: v("cls"),
            pos_space: v("pos_space"),
            pos_time: v("pos_time"),
            blocks,
            norm: (v("norm.g"), v("norm.b")),
            head: (v("head.w"), v("head.b")),
            fusion: FusionVars {
                team: v("fusion.team"),
                agent: v("fusion.agent"),
                area: v("fusion.area"),
                kind: v("fusion.kind"),
                proj_w: v("fusion.proj.w"),
                proj_b: v("fusion.proj.b"),
            },
            all,
        }
    }

    pub fn embedding_tables(&self) -> crate::fusion::EmbeddingTables<'_> {
        crate::fusion::EmbeddingTables {
            team: self.params.get("fusion.team").expect("layout"),
            agent: self.params.get("fusion.agent").expect("layout"),
            area: self.params.get("fusion.area").expect("layout"),
            kind: self.params.get("fusion.kind").expect("layout"),
        }
    }
}

fn layout_entries(c: &ModelConfig, vocab: &EventVocab, out: &mut Vec<(String, ParamKind, Vec<usize>)>) {
    use ParamKind::*;
    let d = c.d_model;
    let hidden = d * c.mlp_ratio;
    let mut add = |name: String, kind, shape: Vec<usize>| out.push((name, kind, shape));
    add("patch.w".into(), Weight, vec![c.patch_dim(), d]);
    add("patch.b".into(), Bias, vec![d]);
    add("cls".into(), Weight, vec![1, d]);
    add("pos_space".into(), Weight, vec![c.n_patches() + 1, d]);
    add("pos_time".into(), Weight, vec![c.frames_per_clip, d]);
    for l in 0..c.n_layers {
        let p = format!("blocks.{l}");
        for (ln, attn) in [("ln_time", "time_attn"), ("ln_space", "space_attn")] {
            add(format!("{p}.{ln}.g"), NormScale, vec![d]);
            add(format!("{p}.{ln}.b"), NormShift, vec![d]);
            add(format!("{p}.{attn}.qkv.w"), Weight, vec![d, 3 * d]);
            add(format!("{p}.{attn}.qkv.b"), Bias, vec![3 * d]);
            add(format!("{p}.{attn}.out.w"), Weight, vec![d, d]);
            add(format!("{p}.{attn}.out.b"), Bias, vec![d]);
        }
        add(format!("{p}.ln_mlp.g"), NormScale, vec![d]);
        add(format!("{p}.ln_mlp.b"), NormShift, vec![d]);
        add(format!("{p}.mlp.fc1.w"), Weight, vec![d, hidden]);
        add(format!("{p}.mlp.fc1.b"), Bias, vec![hidden]);
        add(format!("{p}.mlp.fc2.w"), Weight, vec![hidden, d]);
        add(format!("{p}.mlp.fc2.b"), Bias, vec![d]);
    }
    add("norm.g".into(), NormScale, vec![d]);
    add("norm.b".into(), NormShift, vec![d]);
    add("head.w".into(), Weight, vec![d, c.n_classes]);
    add("head.b".into(), Bias, vec![c.n_classes]);
    let de = c.event_dim;
    add("fusion.team".into(), Embedding, vec![2, de]);
    add("fusion.agent".into(), Embedding, vec![vocab.agents.len().max(1), de]);
    add("fusion.area".into(), Embedding, vec![vocab.areas.len().max(1), de]);
    add("fusion.kind".into(), Embedding, vec![3, de]);
    add("fusion.proj.w".into(), Weight, vec![de, d]);
    add("fusion.proj.b".into(), Bias, vec![d]);
}
