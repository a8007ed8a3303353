//! Whole-model gradients against central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reachavoid_core::seed::rng_from;
use reachavoid_core::{ActionVec, AvoidBox, PromptSpec, StateVec};
use reachavoid_nn::{Graph, Model, ModelConfig, ParamId, SeqItem};

struct Case {
    prompts: Vec<PromptSpec>,
    states: Vec<Vec<StateVec>>,
    actions: Vec<Vec<ActionVec>>,
}

fn case(rng: &mut ChaCha8Rng) -> Case {
    let mut c = Case { prompts: vec![], states: vec![], actions: vec![] };
    // Two boxes (7 prompt tokens) and 9 steps give 24 tokens for the first item.
    for (t, z) in [(9, true), (5, false)] {
        let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let boxes = (0..2).map(|_| AvoidBox::from_centroid(&v(3), 0.3).unwrap()).collect();
        c.prompts.push(PromptSpec::new(z, boxes, StateVec(v(3))).unwrap());
        c.states.push((0..t).map(|_| StateVec(v(3))).collect());
        c.actions.push((0..t).map(|_| ActionVec(v(2))).collect());
    }
    c
}

fn loss(model: &Model, c: &Case) -> (f64, Vec<Vec<f64>>) {
    let items: Vec<SeqItem> = (0..c.prompts.len())
        .map(|i| SeqItem { prompt: &c.prompts[i], states: &c.states[i], actions: &c.actions[i] })
        .collect();
    let mut g = Graph::new(model.params());
    let f = model.forward(&mut g, &items, None).unwrap();
    assert_eq!(f.seq_len, 24);
    let mut ta = Vec::new();
    let mut tk = Vec::new();
    for &(b, t) in &f.state_rows {
        ta.extend_from_slice(&c.actions[b][t]);
        tk.push(((b + t) % 2) as f64);
    }
    let la = g.mse(f.action, ta, None).unwrap();
    let lk = g.bce(f.k, tk, None).unwrap();
    let l = g.add_scaled(la, lk, 1.0).unwrap();
    let v = g.value(l)[0];
    (v, g.backward(l).unwrap())
}

#[test]
fn full_model_matches_finite_differences() {
    let cfg = ModelConfig { embed_dim: 32, max_seq_len: 24, dropout: 0.0, ..ModelConfig::new(3, 2) };
    let mut model = Model::new(cfg, &mut rng_from(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let c = case(&mut rng);
    let (_, grads) = loss(&model, &c);

    // Three entries from every tensor, then more drawn uniformly over all values.
    let mut picks = Vec::new();
    for p in 0..model.params().len() {
        for _ in 0..3 {
            picks.push((p, rng.random_range(0..model.params().get(ParamId(p)).len())));
        }
    }
    let sizes: Vec<usize> = (0..model.params().len()).map(|p| model.params().get(ParamId(p)).len()).collect();
    let total: usize = sizes.iter().sum();
    while picks.len() < 300 {
        let mut k = rng.random_range(0..total);
        let mut p = 0;
        while k >= sizes[p] {
            k -= sizes[p];
            p += 1;
        }
        picks.push((p, k));
    }

    let h = 1e-4;
    let mut worst = 0.0f64;
    for &(p, k) in &picks {
        let orig = model.params().get(ParamId(p)).data[k];
        model.params_mut().get_mut(ParamId(p)).data[k] = orig + h;
        let (lp, _) = loss(&model, &c);
        model.params_mut().get_mut(ParamId(p)).data[k] = orig - h;
        let (lm, _) = loss(&model, &c);
        model.params_mut().get_mut(ParamId(p)).data[k] = orig;
        let num = (lp - lm) / (2.0 * h);
        let ana = grads[p][k];
        let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
            eprintln!("{}[{k}]: analytic {ana:e} numeric {num:e} rel {rel:e}", model.params().name(ParamId(p)));
        }
    }
    assert!(picks.len() >= 200);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn future_tokens_do_not_affect_earlier_outputs() {
    let cfg = ModelConfig { embed_dim: 32, max_seq_len: 40, dropout: 0.0, ..ModelConfig::new(3, 2) };
    let model = Model::new(cfg, &mut rng_from(5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = case(&mut rng);
    let hidden = |c: &Case| {
        let it = SeqItem { prompt: &c.prompts[0], states: &c.states[0], actions: &c.actions[0] };
        let mut g = Graph::new(model.params());
        let f = model.forward(&mut g, &[it], None).unwrap();
        g.value(f.hidden).to_vec()
    };
    let base = hidden(&c);
    let d = 32;
    // Perturb state s_6 (token 7 + 10 = 17) and action a_6 (token 18).
    let mut c2 = case(&mut ChaCha8Rng::seed_from_u64(2));
    c2.states[0][5] = StateVec(vec![9.0, -9.0, 9.0]);
    c2.actions[0][5] = ActionVec(vec![0.7, 0.7]);
    let pert = hidden(&c2);
    for tok in 0..17 {
        assert_eq!(&base[tok * d..(tok + 1) * d], &pert[tok * d..(tok + 1) * d], "token {tok}");
    }
    assert_ne!(&base[17 * d..18 * d], &pert[17 * d..18 * d]);
}
