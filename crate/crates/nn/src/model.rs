//! Prompt-conditioned causal transformer policy.
//!
//! Input sequence per item: `z, i_b, box_1 .. box_n, i_g, goal, e`, then
//! `s_1, a_1, s_2, a_2, .., s_T`. Items in a batch are right-padded. Every
//! layer adds `adelta` to the attention logits of prompt keys. The action
//! head (tanh) and the avoid-indicator head (sigmoid) read the final hidden
//! state at each state token.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use reachavoid_core::seed::Rng;
use reachavoid_core::{ActionVec, PromptSpec, StateVec};
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::tape::{AttnShape, Graph, ParamId, ParamStore, Tensor, Var};

/// Number of prompt tokens for `n_boxes` avoid boxes.
pub fn prompt_len(n_boxes: usize) -> usize {
    n_boxes + 5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_s: usize,
    pub d_a: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub embed_dim: usize,
    /// Size of the positional table; prompt plus trajectory tokens must fit.
    pub max_seq_len: usize,
    pub adelta: f64,
    pub dropout: f64,
    /// States, goals and box bounds enter the network as `(x - shift) / scale`.
    pub state_shift: Vec<f64>,
    pub state_scale: Vec<f64>,
}

impl ModelConfig {
    pub fn new(d_s: usize, d_a: usize) -> Self {
        ModelConfig {
            d_s,
            d_a,
            n_layer: 2,
            n_head: 2,
            embed_dim: 128,
            max_seq_len: 140,
            adelta: 2.0,
            dropout: 0.1,
            state_shift: vec![0.0; d_s],
            state_scale: vec![1.0; d_s],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.d_s == 0 || self.d_a == 0 {
            return bad("d_s and d_a must be positive".into());
        }
        if self.n_layer == 0 || self.n_head == 0 || self.embed_dim == 0 {
            return bad("n_layer, n_head and embed_dim must be positive".into());
        }
        if self.embed_dim % self.n_head != 0 {
            return bad(format!("embed_dim {} is not divisible by n_head {}", self.embed_dim, self.n_head));
        }
        if self.max_seq_len < prompt_len(0) + 1 {
            return bad(format!("max_seq_len {} leaves no room for a state token", self.max_seq_len));
        }
        if !self.adelta.is_finite() {
            return bad("adelta must be finite".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.state_shift.len() != self.d_s || self.state_scale.len() != self.d_s {
            return bad("state_shift and state_scale must have d_s entries".into());
        }
        if self.state_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.state_shift.iter().any(|s| !s.is_finite()) {
            return bad("state_scale must be positive and finite, state_shift finite".into());
        }
        Ok(())
    }
}

/// One sequence: the prompt, states `s_1..s_T` and at least `T - 1` actions.
/// Extra trailing actions are ignored (they are targets, not inputs).
#[derive(Debug, Clone, Copy)]
pub struct SeqItem<'a> {
    pub prompt: &'a PromptSpec,
    pub states: &'a [StateVec],
    pub actions: &'a [ActionVec],
}

impl<'a> SeqItem<'a> {
    pub fn token_count(&self) -> usize {
        prompt_len(self.prompt.boxes.len()) + 2 * self.states.len() - 1
    }
}

struct LayerIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    qkv_w: ParamId,
    qkv_b: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    fc_w: ParamId,
    fc_b: ParamId,
    fc2_w: ParamId,
    fc2_b: ParamId,
}

struct Ids {
    e_z: ParamId,
    e_i: ParamId,
    e_end: ParamId,
    e_box: ParamId,
    e_goal: ParamId,
    state_w: ParamId,
    state_b: ParamId,
    action_w: ParamId,
    action_b: ParamId,
    pos: ParamId,
    layers: Vec<LayerIds>,
    lnf_g: ParamId,
    lnf_b: ParamId,
    head_a_w: ParamId,
    head_a_b: ParamId,
    head_k_w: ParamId,
    head_k_b: ParamId,
}

/// Output handles of one forward pass.
pub struct Forward {
    /// `[n_states, d_a]` action predictions, one row per state token.
    pub action: Var,
    /// `[n_states, 1]` predicted probability that the state is outside every box.
    pub k: Var,
    /// `[batch * seq_len, embed_dim]` final normalised hidden states.
    pub hidden: Var,
    /// Per-layer attention logits `[batch, heads, seq_len, seq_len]`, before masking.
    pub logits: Vec<Var>,
    /// `(item, step)` for each row of `action` and `k`.
    pub state_rows: Vec<(usize, usize)>,
    pub seq_len: usize,
}

pub struct Model {
    cfg: ModelConfig,
    params: ParamStore,
    ids: Ids,
}

fn normal_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, 0.02).expect("valid normal");
    Tensor { shape, data: (0..n).map(|_| dist.sample(rng)).collect() }
}

fn const_tensor(shape: Vec<usize>, v: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor { shape, data: vec![v; n] }
}

impl Model {
    /// Weights `N(0, 0.02)`, biases zero, layer-norm gains one.
    pub fn new(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (d, ds, da) = (cfg.embed_dim, cfg.d_s, cfg.d_a);
        let mut p = ParamStore::new();
        let mut w = |p: &mut ParamStore, name: &str, shape: Vec<usize>| p.add(name, normal_tensor(shape, rng));
        let e_z = w(&mut p, "emb.z", vec![2, d]);
        let e_i = w(&mut p, "emb.delim", vec![2, d]);
        let e_end = w(&mut p, "emb.end", vec![1, d]);
        let e_box = w(&mut p, "emb.box", vec![2 * ds, d]);
        let e_goal = w(&mut p, "emb.goal", vec![ds, d]);
        let state_w = w(&mut p, "emb.state.w", vec![ds, d]);
        let state_b = p.add("emb.state.b", const_tensor(vec![d], 0.0));
        let action_w = w(&mut p, "emb.action.w", vec![da, d]);
        let action_b = p.add("emb.action.b", const_tensor(vec![d], 0.0));
        let pos = w(&mut p, "emb.pos", vec![cfg.max_seq_len, d]);
        let mut layers = Vec::new();
        for l in 0..cfg.n_layer {
            let n = |s: &str| format!("h{l}.{s}");
            layers.push(LayerIds {
                ln1_g: p.add(&n("ln1.g"), const_tensor(vec![d], 1.0)),
                ln1_b: p.add(&n("ln1.b"), const_tensor(vec![d], 0.0)),
                qkv_w: w(&mut p, &n("attn.qkv.w"), vec![d, 3 * d]),
                qkv_b: p.add(&n("attn.qkv.b"), const_tensor(vec![3 * d], 0.0)),
                proj_w: w(&mut p, &n("attn.proj.w"), vec![d, d]),
                proj_b: p.add(&n("attn.proj.b"), const_tensor(vec![d], 0.0)),
                ln2_g: p.add(&n("ln2.g"), const_tensor(vec![d], 1.0)),
                ln2_b: p.add(&n("ln2.b"), const_tensor(vec![d], 0.0)),
                fc_w: w(&mut p, &n("mlp.fc.w"), vec![d, 4 * d]),
                fc_b: p.add(&n("mlp.fc.b"), const_tensor(vec![4 * d], 0.0)),
                fc2_w: w(&mut p, &n("mlp.proj.w"), vec![4 * d, d]),
                fc2_b: p.add(&n("mlp.proj.b"), const_tensor(vec![d], 0.0)),
            });
        }
        let lnf_g = p.add("ln_f.g", const_tensor(vec![d], 1.0));
        let lnf_b = p.add("ln_f.b", const_tensor(vec![d], 0.0));
        let head_a_w = w(&mut p, "head.action.w", vec![d, da]);
        let head_a_b = p.add("head.action.b", const_tensor(vec![da], 0.0));
        let head_k_w = w(&mut p, "head.k.w", vec![d, 1]);
        let head_k_b = p.add("head.k.b", const_tensor(vec![1], 0.0));
        let ids = Ids {
            e_z,
            e_i,
            e_end,
            e_box,
            e_goal,
            state_w,
            state_b,
            action_w,
            action_b,
            pos,
            layers,
            lnf_g,
            lnf_b,
            head_a_w,
            head_a_b,
            head_k_w,
            head_k_b,
        };
        Ok(Model { cfg, params: p, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_values()
    }

    pub fn set_adelta(&mut self, adelta: f64) {
        self.cfg.adelta = adelta;
    }

    fn norm_state(&self, s: &[f64], out: &mut Vec<f64>) {
        out.extend(s.iter().zip(&self.cfg.state_shift).zip(&self.cfg.state_scale).map(|((x, m), sc)| (x - m) / sc));
    }

    fn check_item(&self, it: &SeqItem) -> Result<()> {
        let (ds, da) = (self.cfg.d_s, self.cfg.d_a);
        if it.states.is_empty() {
            return Err(NnError::Shape("sequence needs at least one state".into()));
        }
        if it.prompt.d_s() != ds || it.prompt.boxes.iter().any(|b| b.dim() != ds) {
            return Err(NnError::Shape(format!("prompt dimension differs from d_s={ds}")));
        }
        if let Some(s) = it.states.iter().find(|s| s.len() != ds) {
            return Err(NnError::Shape(format!("state of dimension {} for d_s={ds}", s.len())));
        }
        if it.actions.len() + 1 < it.states.len() {
            return Err(NnError::Shape(format!("{} states need {} actions", it.states.len(), it.states.len() - 1)));
        }
        if let Some(a) = it.actions[..it.states.len() - 1].iter().find(|a| a.len() != da) {
            return Err(NnError::Shape(format!("action of dimension {} for d_a={da}", a.len())));
        }
        if it.token_count() > self.cfg.max_seq_len {
            return Err(NnError::Context(format!("{} tokens exceed max_seq_len {}", it.token_count(), self.cfg.max_seq_len)));
        }
        Ok(())
    }

    /// Records a forward pass on `g`. Dropout is active when `dropout_rng` is given.
    pub fn forward<'p>(&'p self, g: &mut Graph<'p>, items: &[SeqItem], mut dropout_rng: Option<&mut Rng>) -> Result<Forward> {
        if items.is_empty() {
            return Err(NnError::Shape("empty batch".into()));
        }
        for it in items {
            self.check_item(it)?;
        }
        let (d, ds, da) = (self.cfg.embed_dim, self.cfg.d_s, self.cfg.d_a);
        let nb = items.len();
        let seq_len = items.iter().map(SeqItem::token_count).max().unwrap_or(0);
        let row = |b: usize, p: usize| b * seq_len + p;

        let (mut z, mut zi) = (Vec::new(), Vec::new());
        let (mut delim, mut di) = (Vec::new(), Vec::new());
        let (mut boxes, mut bi) = (Vec::new(), Vec::new());
        let (mut goal, mut gi) = (Vec::new(), Vec::new());
        let mut ei = Vec::new();
        let (mut st, mut si) = (Vec::new(), Vec::new());
        let (mut act, mut ai) = (Vec::new(), Vec::new());
        let mut plens = Vec::with_capacity(nb);
        let mut state_rows = Vec::new();
        for (b, it) in items.iter().enumerate() {
            let n = it.prompt.boxes.len();
            let p = prompt_len(n);
            plens.push(p);
            z.extend(if it.prompt.z { [1.0, 0.0] } else { [0.0, 1.0] });
            zi.push(row(b, 0));
            delim.extend([1.0, 0.0, 0.0, 1.0]);
            di.extend([row(b, 1), row(b, 2 + n)]);
            for (j, bx) in it.prompt.boxes.iter().enumerate() {
                self.norm_state(&bx.lower, &mut boxes);
                self.norm_state(&bx.upper, &mut boxes);
                bi.push(row(b, 2 + j));
            }
            self.norm_state(&it.prompt.goal, &mut goal);
            gi.push(row(b, 3 + n));
            ei.push(row(b, 4 + n));
            let t_len = it.states.len();
            for t in 0..t_len {
                self.norm_state(&it.states[t], &mut st);
                si.push(row(b, p + 2 * t));
                state_rows.push((b, t));
                if t + 1 < t_len {
                    act.extend_from_slice(&it.actions[t]);
                    ai.push(row(b, p + 2 * t + 1));
                }
            }
        }
        let ids = &self.ids;
        let mut parts = Vec::new();
        let zin = g.input(vec![nb, 2], z)?;
        let e = g.param(ids.e_z);
        parts.push((g.matmul(zin, e)?, zi));
        let din = g.input(vec![2 * nb, 2], delim)?;
        let e = g.param(ids.e_i);
        parts.push((g.matmul(din, e)?, di));
        if !bi.is_empty() {
            let bin = g.input(vec![bi.len(), 2 * ds], boxes)?;
            let e = g.param(ids.e_box);
            parts.push((g.matmul(bin, e)?, bi));
        }
        let gin = g.input(vec![nb, ds], goal)?;
        let e = g.param(ids.e_goal);
        parts.push((g.matmul(gin, e)?, gi));
        let ones = g.input(vec![nb, 1], vec![1.0; nb])?;
        let e = g.param(ids.e_end);
        parts.push((g.matmul(ones, e)?, ei));
        let sin = g.input(vec![si.len(), ds], st)?;
        let (w, bias) = (g.param(ids.state_w), g.param(ids.state_b));
        let s_emb = g.matmul(sin, w)?;
        parts.push((g.add_bias(s_emb, bias)?, si.clone()));
        if !ai.is_empty() {
            let ain = g.input(vec![ai.len(), da], act)?;
            let (w, bias) = (g.param(ids.action_w), g.param(ids.action_b));
            let a_emb = g.matmul(ain, w)?;
            parts.push((g.add_bias(a_emb, bias)?, ai));
        }
        let tok = g.scatter_rows(parts, nb * seq_len, d)?;
        let pos_table = g.param(ids.pos);
        let pos = g.gather_rows(pos_table, (0..nb * seq_len).map(|r| r % seq_len).collect())?;
        let mut h = g.add(tok, pos)?;
        h = self.dropout(g, h, &mut dropout_rng)?;

        let shape = AttnShape { batch: nb, len: seq_len, heads: self.cfg.n_head, embed: d };
        let scale = 1.0 / ((d / self.cfg.n_head) as f64).sqrt();
        let mut logits = Vec::with_capacity(self.cfg.n_layer);
        for l in &ids.layers {
            let (lg, lb) = (g.param(l.ln1_g), g.param(l.ln1_b));
            let a = g.layer_norm(h, lg, lb)?;
            let (w, bias) = (g.param(l.qkv_w), g.param(l.qkv_b));
            let qkv = g.matmul(a, w)?;
            let qkv = g.add_bias(qkv, bias)?;
            let lo = g.attn_logits(qkv, shape.clone(), scale, &plens, self.cfg.adelta)?;
            logits.push(lo);
            let pr = g.causal_softmax(lo)?;
            let pr = self.dropout(g, pr, &mut dropout_rng)?;
            let y = g.attn_apply(pr, qkv, shape.clone())?;
            let (w, bias) = (g.param(l.proj_w), g.param(l.proj_b));
            let y = g.matmul(y, w)?;
            let y = g.add_bias(y, bias)?;
            let y = self.dropout(g, y, &mut dropout_rng)?;
            h = g.add(h, y)?;

            let (lg, lb) = (g.param(l.ln2_g), g.param(l.ln2_b));
            let m = g.layer_norm(h, lg, lb)?;
            let (w, bias) = (g.param(l.fc_w), g.param(l.fc_b));
            let m = g.matmul(m, w)?;
            let m = g.add_bias(m, bias)?;
            let m = g.gelu(m);
            let (w, bias) = (g.param(l.fc2_w), g.param(l.fc2_b));
            let m = g.matmul(m, w)?;
            let m = g.add_bias(m, bias)?;
            let m = self.dropout(g, m, &mut dropout_rng)?;
            h = g.add(h, m)?;
        }
        let (lg, lb) = (g.param(ids.lnf_g), g.param(ids.lnf_b));
        let hidden = g.layer_norm(h, lg, lb)?;
        let hs = g.gather_rows(hidden, si)?;
        let (w, bias) = (g.param(ids.head_a_w), g.param(ids.head_a_b));
        let a = g.matmul(hs, w)?;
        let a = g.add_bias(a, bias)?;
        let action = g.tanh(a);
        let (w, bias) = (g.param(ids.head_k_w), g.param(ids.head_k_b));
        let k = g.matmul(hs, w)?;
        let k = g.add_bias(k, bias)?;
        let k = g.sigmoid(k);
        Ok(Forward { action, k, hidden, logits, state_rows, seq_len })
    }

    fn dropout(&self, g: &mut Graph, x: Var, rng: &mut Option<&mut Rng>) -> Result<Var> {
        let p = self.cfg.dropout;
        match rng {
            Some(r) if p > 0.0 => {
                let keep: Vec<bool> = (0..g.value(x).len()).map(|_| r.random::<f64>() >= p).collect();
                g.dropout(x, &keep, p)
            }
            _ => Ok(x),
        }
    }

    /// Largest number of states that fits the context alongside a prompt of `n_boxes`.
    pub fn max_states(&self, n_boxes: usize) -> usize {
        (self.cfg.max_seq_len + 1).saturating_sub(prompt_len(n_boxes)) / 2
    }

    /// Trims an item to its most recent states so it fits the context. The
    /// window always starts at a state token.
    pub fn truncate<'a>(&self, it: SeqItem<'a>) -> Result<SeqItem<'a>> {
        let keep = self.max_states(it.prompt.boxes.len());
        if keep == 0 {
            return Err(NnError::Context(format!(
                "prompt of {} tokens leaves no room in max_seq_len {}",
                prompt_len(it.prompt.boxes.len()),
                self.cfg.max_seq_len
            )));
        }
        let t = it.states.len();
        if t <= keep {
            return Ok(it);
        }
        let start = t - keep;
        Ok(SeqItem { prompt: it.prompt, states: &it.states[start..], actions: &it.actions[start..(t - 1).max(start)] })
    }

    /// Action predicted at each item's last state, without dropout. Long
    /// histories are truncated to the most recent window.
    pub fn predict_actions(&self, items: &[SeqItem]) -> Result<Vec<ActionVec>> {
        let items: Vec<SeqItem> = items.iter().map(|&it| self.truncate(it)).collect::<Result<_>>()?;
        let mut g = Graph::new(&self.params);
        let f = self.forward(&mut g, &items, None)?;
        let vals = g.value(f.action);
        let da = self.cfg.d_a;
        let mut last = vec![0usize; items.len()];
        for (r, &(b, _)) in f.state_rows.iter().enumerate() {
            last[b] = r;
        }
        Ok(last.into_iter().map(|r| ActionVec(vals[r * da..(r + 1) * da].to_vec())).collect())
    }
}
