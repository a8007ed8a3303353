use proptest::prelude::*;
use reachavoid_core::envs::{Env, ReachConfig, ReachEnv};
use reachavoid_core::seed::{rng_from, Rng};
use reachavoid_core::{ActionVec, AvoidBox, StateVec};
use reachavoid_eval::{evaluate, mnc, EvalConfig, Policy, RandomPolicy, Result};
use reachavoid_nn::SeqItem;

fn reach(max_steps: usize) -> ReachConfig {
    ReachConfig { max_episode_steps: max_steps, ..ReachConfig::default() }
}

/// Heads straight for the goal at full speed.
struct Homing;

impl Policy for Homing {
    fn act(&mut self, items: &[SeqItem], _envs: &[&dyn Env], _rng: &mut Rng) -> Result<Vec<ActionVec>> {
        Ok(items
            .iter()
            .map(|it| {
                let s = it.states.last().unwrap();
                ActionVec(s.0.iter().zip(&it.prompt.goal.0).map(|(x, g)| ((g - x) / 0.05).clamp(-1.0, 1.0)).collect())
            })
            .collect())
    }
}

#[test]
fn random_episodes_stop_at_the_step_limit() {
    let cfg = reach(12);
    let make = || -> reachavoid_core::Result<Box<dyn Env>> { Ok(Box::new(ReachEnv::new(cfg.clone())?)) };
    let rep = evaluate(&make, &mut RandomPolicy, &EvalConfig { n_episodes: 100, seed: 2, fixed_boxes: None }).unwrap();
    for ep in &rep.episodes {
        assert!(ep.length <= 12);
        assert!(ep.reached || ep.length == 12);
        assert_eq!(ep.states.len(), ep.length + 1);
    }
}

#[test]
fn homing_policy_always_arrives() {
    let cfg = reach(30);
    let make = || -> reachavoid_core::Result<Box<dyn Env>> { Ok(Box::new(ReachEnv::new(cfg.clone())?)) };
    let rep = evaluate(&make, &mut Homing, &EvalConfig { n_episodes: 50, seed: 3, fixed_boxes: None }).unwrap();
    assert_eq!(rep.sr, 1.0);
}

#[test]
fn cost_is_one_inside_a_box_covering_everything_and_zero_far_away() {
    let cfg = reach(10);
    let make = || -> reachavoid_core::Result<Box<dyn Env>> { Ok(Box::new(ReachEnv::new(cfg.clone())?)) };
    let all = AvoidBox::new(vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let none = AvoidBox::new(vec![5.0; 3], vec![6.0; 3]).unwrap();
    let run = |b: AvoidBox| {
        let c = EvalConfig { n_episodes: 20, seed: 4, fixed_boxes: Some(vec![b]) };
        evaluate(&make, &mut RandomPolicy, &c).unwrap()
    };
    let (inside, outside) = (run(all), run(none));
    assert_eq!(inside.mnc, 1.0);
    assert_eq!(outside.mnc, 0.0);
    assert!(inside.episodes.iter().all(|e| e.cost as usize == e.length));
}

#[test]
fn evaluation_is_reproducible() {
    let cfg = reach(20);
    let make = || -> reachavoid_core::Result<Box<dyn Env>> { Ok(Box::new(ReachEnv::new(cfg.clone())?)) };
    let c = EvalConfig { n_episodes: 10, seed: 9, fixed_boxes: None };
    let a = evaluate(&make, &mut RandomPolicy, &c).unwrap();
    let b = evaluate(&make, &mut RandomPolicy, &c).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn mnc_is_the_fraction_of_transitions_ending_in_a_box(
        pts in prop::collection::vec(prop::collection::vec(0i32..6, 2), 2..20),
        lo in prop::collection::vec(0i32..6, 2),
        size in 0i32..4,
    ) {
        let states: Vec<StateVec> = pts.iter().map(|p| StateVec(p.iter().map(|&x| x as f64).collect())).collect();
        let lower: Vec<f64> = lo.iter().map(|&x| x as f64).collect();
        let upper: Vec<f64> = lower.iter().map(|x| x + size as f64).collect();
        let b = AvoidBox::new(lower.clone(), upper.clone()).unwrap();
        let hits = states[1..]
            .iter()
            .filter(|s| (0..2).all(|i| lower[i] <= s.0[i] && s.0[i] <= upper[i]))
            .count();
        let got = mnc(&states, &[b]).unwrap();
        prop_assert_eq!(got, hits as f64 / (states.len() - 1) as f64);
    }
}

#[test]
fn random_policy_uses_each_environment_sampler() {
    let env = ReachEnv::new(reach(5)).unwrap();
    let mut rng = rng_from(1);
    let prompt = reachavoid_core::PromptSpec::new(true, vec![], StateVec(vec![0.0; 3])).unwrap();
    let states = vec![StateVec(vec![0.1; 3])];
    let item = SeqItem { prompt: &prompt, states: &states, actions: &[] };
    for _ in 0..100 {
        let a = RandomPolicy.act(&[item], &[&env], &mut rng).unwrap();
        assert!(a[0].0.iter().all(|x| (-1.0..=1.0).contains(x)));
    }
}
