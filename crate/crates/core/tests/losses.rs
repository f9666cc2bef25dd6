//! Loss terms against independent straight-line evaluations, finite
//! differences and the stop-gradient contract.

mod common;

use common::*;
use rohil_core::learners::{
    actor_loss, bellman_target, critic_loss, AgentVars, AnchorHead, AnchorTargets, Batch,
    LearnerConfig,
};
use rohil_core::nets::{sample_squashed, Agent, Binding, Params};
use rohil_core::numerics::{central_difference, relative_error, Tape, Var};

fn cfg(head: AnchorHead) -> LearnerConfig {
    LearnerConfig {
        anchor_head: head,
        ..Default::default()
    }
}

fn encode(agent: &Agent<f64>, x: &[f64]) -> Vec<f64> {
    dense(&agent.encoder.out, &relu(dense(&agent.encoder.hidden, x)))
}

fn head(agent: &Agent<f64>, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = relu(dense(&agent.actor.hidden, f));
    let mean = dense(&agent.actor.mean, &h);
    let log_std = dense(&agent.actor.log_std, &h)
        .into_iter()
        .map(|r| -5.0 + 3.5 * (r.tanh() + 1.0))
        .collect();
    (mean, log_std)
}

fn q(c: &rohil_core::nets::Critic<f64>, f: &[f64], a: &[f64]) -> f64 {
    let x: Vec<f64> = f.iter().chain(a).copied().collect();
    dense(&c.out, &relu(dense(&c.hidden, &x)))[0]
}

fn log_prob(mean: &[f64], log_std: &[f64], noise: &[f64]) -> (Vec<f64>, f64) {
    let mut lp = 0.0;
    let a = (0..mean.len())
        .map(|d| {
            let a = (mean[d] + log_std[d].exp() * noise[d]).tanh();
            lp += -0.5 * (2.0 * std::f64::consts::PI).ln()
                - log_std[d]
                - 0.5 * noise[d] * noise[d]
                - (1.0 - a * a + 1e-6).ln();
            a
        })
        .collect();
    (a, lp)
}

fn oracle_target(agent: &Agent<f64>, batch: &Batch<f64>, cfg: &LearnerConfig, i: usize) -> f64 {
    let f = encode(agent, batch.next_obs.row(i));
    let (m, ls) = head(agent, &f);
    let (a, lp) = log_prob(&m, &ls, batch.next_noise.row(i));
    let qmin = q(&agent.targets[0], &f, &a).min(q(&agent.targets[1], &f, &a));
    batch.rewards.data()[i] + cfg.gamma * batch.not_done.data()[i] * (qmin - cfg.eta * lp)
}

fn target_values(agent: &Agent<f64>, batch: &Batch<f64>, cfg: &LearnerConfig) -> Vec<f64> {
    let mut tape = Tape::new();
    let vars = AgentVars::all_trainable(&mut tape, agent).unwrap();
    let y = bellman_target(&mut tape, &vars, batch, cfg).unwrap();
    tape.value(y).data().to_vec()
}

fn perturbed_agent(seed: u64) -> Agent<f64> {
    let mut agent = Agent::<f64>::new(tiny_dims(), seed);
    // separate targets from the online critics
    let other = Agent::<f64>::new(tiny_dims(), seed + 1000);
    agent.targets = other.critics.clone();
    agent
}

#[test]
fn bellman_target_terminal_and_zero_discount_reduce_to_reward() {
    let agent = perturbed_agent(1);
    let mut batch = random_batch(&agent.dims, 6, 2);
    batch.not_done = batch.not_done.map(|_| 0.0);
    let y = target_values(&agent, &batch, &LearnerConfig::default());
    assert_eq!(y, batch.rewards.data());

    let batch = random_batch(&agent.dims, 6, 3);
    let zero = LearnerConfig {
        gamma: 0.0,
        ..Default::default()
    };
    assert_eq!(target_values(&agent, &batch, &zero), batch.rewards.data());
}

#[test]
fn bellman_target_matches_straight_line_oracle() {
    let agent = perturbed_agent(4);
    let batch = random_batch(&agent.dims, 1, 5);
    let c = LearnerConfig::default();
    let y = target_values(&agent, &batch, &c);
    let expect = oracle_target(&agent, &batch, &c, 0);
    assert!((y[0] - expect).abs() < 1e-12, "{} vs {expect}", y[0]);
}

fn critic_value(
    agent: &Agent<f64>,
    anchor: Option<&AnchorTargets<f64>>,
    batch: &Batch<f64>,
    c: &LearnerConfig,
    rho: f64,
) -> (f64, f64, Option<f64>) {
    let mut tape = Tape::new();
    let vars = AgentVars::all_trainable(&mut tape, agent).unwrap();
    let terms = critic_loss(&mut tape, &vars, anchor, batch, c, rho).unwrap();
    let v = |v: Var| tape.value(v).item();
    (v(terms.total), v(terms.bellman), terms.feat.map(v))
}

fn actor_value(
    agent: &Agent<f64>,
    anchor: Option<&AnchorTargets<f64>>,
    batch: &Batch<f64>,
    c: &LearnerConfig,
    rho: f64,
) -> (f64, f64, Option<f64>) {
    let mut tape = Tape::new();
    let vars = AgentVars::all_trainable(&mut tape, agent).unwrap();
    let terms = actor_loss(&mut tape, &vars, anchor, batch, c, rho).unwrap();
    let v = |v: Var| tape.value(v).item();
    (v(terms.total), v(terms.sac), terms.anchor.map(v))
}

#[test]
fn critic_loss_matches_straight_line_oracle() {
    let agent = perturbed_agent(6);
    let theta0 = Agent::<f64>::new(tiny_dims(), 77);
    let batch = random_batch(&agent.dims, 2, 7);
    let targets = anchor_targets(&theta0, &batch);
    let c = cfg(AnchorHead::Mse);
    let rho = 0.8;
    let (total, bellman, feat) = critic_value(&agent, Some(&targets), &batch, &c, rho);

    let mut expect_bellman = 0.0;
    for critic in &agent.critics {
        let mut acc = 0.0;
        for i in 0..2 {
            let f = encode(&agent, batch.obs.row(i));
            let err = q(critic, &f, batch.actions.row(i)) - oracle_target(&agent, &batch, &c, i);
            acc += err * err;
        }
        expect_bellman += acc / 2.0;
    }
    // row 1 is the only anchor row
    let f = encode(&agent, batch.obs.row(1));
    let f0 = encode(&theta0, batch.obs.row(1));
    let dist: f64 = f.iter().zip(&f0).map(|(a, b)| (a - b) * (a - b)).sum();
    let expect_feat = c.lambda_feat * rho * dist;

    assert!((bellman - expect_bellman).abs() < 1e-12);
    assert!((feat.unwrap() - expect_feat).abs() < 1e-12);
    assert!((total - expect_bellman - expect_feat).abs() < 1e-12);

    let plain = LearnerConfig {
        lambda_feat: 0.0,
        ..c
    };
    let (total, bellman, _) = critic_value(&agent, Some(&targets), &batch, &plain, rho);
    assert_eq!(total, bellman);
}

#[test]
fn actor_loss_matches_straight_line_oracle() {
    let agent = perturbed_agent(8);
    let theta0 = Agent::<f64>::new(tiny_dims(), 78);
    let batch = random_batch(&agent.dims, 2, 9);
    let targets = anchor_targets(&theta0, &batch);
    let rho = 0.6;

    let mut expect_sac = 0.0;
    for i in 0..2 {
        let f = encode(&agent, batch.obs.row(i));
        let (m, ls) = head(&agent, &f);
        let (a, lp) = log_prob(&m, &ls, batch.noise.row(i));
        let qmin = q(&agent.critics[0], &f, &a).min(q(&agent.critics[1], &f, &a));
        expect_sac += (LearnerConfig::default().eta * lp - qmin) / 2.0;
    }
    let f = encode(&agent, batch.obs.row(1));
    let (m, ls) = head(&agent, &f);
    let f0 = encode(&theta0, batch.obs.row(1));
    let (m0, ls0) = head(&theta0, &f0);

    let c = cfg(AnchorHead::Mse);
    let (total, sac, anchor) = actor_value(&agent, Some(&targets), &batch, &c, rho);
    let mse: f64 = m.iter().zip(&m0).map(|(a, b)| (a - b) * (a - b)).sum();
    assert!((sac - expect_sac).abs() < 1e-12);
    assert!((anchor.unwrap() - c.beta_mse * rho * mse).abs() < 1e-12);
    assert!((total - sac - anchor.unwrap()).abs() < 1e-15);

    let c = cfg(AnchorHead::Kl);
    let (_, sac_kl, anchor) = actor_value(&agent, Some(&targets), &batch, &c, rho);
    let kl: f64 = (0..2)
        .map(|d| {
            let (s0, s) = (ls0[d].exp(), ls[d].exp());
            (s / s0).ln() + (s0 * s0 + (m0[d] - m[d]).powi(2)) / (2.0 * s * s) - 0.5
        })
        .sum();
    assert_eq!(sac_kl, sac);
    assert!((anchor.unwrap() - c.beta_mse * rho * kl).abs() < 1e-12);

    let (total, sac, anchor) =
        actor_value(&agent, Some(&targets), &batch, &cfg(AnchorHead::None), rho);
    assert!(anchor.is_none());
    assert_eq!(total, sac);
}

#[test]
fn anchors_vanish_at_theta_zero() {
    let agent = perturbed_agent(10);
    let batch = random_batch(&agent.dims, 8, 11);
    let targets = anchor_targets(&agent, &batch);
    for head in [AnchorHead::Mse, AnchorHead::Kl] {
        let (_, _, feat) = critic_value(&agent, Some(&targets), &batch, &cfg(head), 1.0);
        let (_, _, anchor) = actor_value(&agent, Some(&targets), &batch, &cfg(head), 1.0);
        assert!(feat.unwrap().abs() <= 1e-12);
        assert!(anchor.unwrap().abs() <= 1e-12);
    }
    let (_, _, feat) = critic_value(&agent, Some(&targets), &batch, &cfg(AnchorHead::None), 1.0);
    assert!(feat.is_none());
}

#[test]
fn sampled_log_prob_matches_closed_form_at_origin() {
    let (a, lp) = sample_squashed(&[0.0f64, 0.0], &[0.0, 0.0], &[0.0, 0.0]);
    assert_eq!(a, vec![0.0, 0.0]);
    let expect = -(2.0 * std::f64::consts::PI).ln() - 2.0 * (1.0f64 + 1e-6).ln();
    assert!((lp - expect).abs() < 1e-12);
    assert!((lp + 1.8379).abs() < 1e-4);
}

// ---------- stop-gradient contract ----------

fn grad_norms(
    tape: &Tape<'_, f64>,
    grads: &rohil_core::numerics::Grads<f64>,
    leaves: Vec<Var>,
) -> f64 {
    leaves
        .into_iter()
        .map(|v| grads.get_or_zeros(tape, v).squared_norm())
        .sum()
}

#[test]
fn critic_loss_never_reaches_actor_or_targets() {
    for seed in 0..5 {
        let agent = perturbed_agent(20 + seed);
        let theta0 = Agent::<f64>::new(tiny_dims(), 90 + seed);
        let batch = random_batch(&agent.dims, 8, 30 + seed);
        let targets = anchor_targets(&theta0, &batch);
        let mut tape = Tape::new();
        let vars = AgentVars::all_trainable(&mut tape, &agent).unwrap();
        let terms = critic_loss(
            &mut tape,
            &vars,
            Some(&targets),
            &batch,
            &cfg(AnchorHead::Mse),
            1.0,
        )
        .unwrap();
        let grads = tape.backward(terms.total).unwrap();
        assert_eq!(grad_norms(&tape, &grads, vars.actor.leaves()), 0.0);
        let target_leaves = vars.targets.iter().flat_map(|t| t.leaves()).collect();
        assert_eq!(grad_norms(&tape, &grads, target_leaves), 0.0);
        assert!(grad_norms(&tape, &grads, vars.encoder.leaves()) > 0.0);
        assert!(grad_norms(&tape, &grads, vars.critics[0].leaves()) > 0.0);
    }
}

#[test]
fn actor_loss_never_reaches_critics_encoder_or_targets() {
    for head in [AnchorHead::Mse, AnchorHead::Kl] {
        for seed in 0..5 {
            let agent = perturbed_agent(40 + seed);
            let theta0 = Agent::<f64>::new(tiny_dims(), 95 + seed);
            let batch = random_batch(&agent.dims, 8, 50 + seed);
            let targets = anchor_targets(&theta0, &batch);
            let mut tape = Tape::new();
            let vars = AgentVars::all_trainable(&mut tape, &agent).unwrap();
            let terms =
                actor_loss(&mut tape, &vars, Some(&targets), &batch, &cfg(head), 1.0).unwrap();
            let grads = tape.backward(terms.total).unwrap();
            let critic_leaves = vars
                .critics
                .iter()
                .chain(&vars.targets)
                .flat_map(|c| c.leaves())
                .collect();
            assert_eq!(grad_norms(&tape, &grads, critic_leaves), 0.0);
            assert_eq!(grad_norms(&tape, &grads, vars.encoder.leaves()), 0.0);
            assert!(grad_norms(&tape, &grads, vars.actor.leaves()) > 0.0);
        }
    }
}

// ---------- finite-difference oracle ----------

#[derive(Clone, Copy, Debug)]
enum Term {
    Bellman,
    Feat,
    Sac,
    Mse,
    Kl,
}

#[derive(Clone, Copy)]
enum Group {
    /// encoder, critic1, critic2
    Critic,
    Actor,
}

fn group_flat(agent: &Agent<f64>, g: Group) -> Vec<f64> {
    match g {
        Group::Critic => {
            let mut v = flatten(&agent.encoder);
            v.extend(flatten(&agent.critics[0]));
            v.extend(flatten(&agent.critics[1]));
            v
        }
        Group::Actor => flatten(&agent.actor),
    }
}

fn set_group(agent: &mut Agent<f64>, g: Group, flat: &[f64]) {
    match g {
        Group::Critic => {
            let (ne, nc) = (
                agent.encoder.parameter_count(),
                agent.critics[0].parameter_count(),
            );
            unflatten(&mut agent.encoder, &flat[..ne]);
            unflatten(&mut agent.critics[0], &flat[ne..ne + nc]);
            unflatten(&mut agent.critics[1], &flat[ne + nc..]);
        }
        Group::Actor => unflatten(&mut agent.actor, flat),
    }
}

/// Value of one term and its tape gradient over the group's parameters.
fn term_and_grad(
    agent: &Agent<f64>,
    anchor: &AnchorTargets<f64>,
    batch: &Batch<f64>,
    term: Term,
) -> (f64, Vec<f64>) {
    let (head, group) = match term {
        Term::Bellman | Term::Feat => (AnchorHead::Mse, Group::Critic),
        Term::Sac | Term::Mse => (AnchorHead::Mse, Group::Actor),
        Term::Kl => (AnchorHead::Kl, Group::Actor),
    };
    let c = cfg(head);
    let rho = 0.7;
    let mut tape = Tape::new();
    let vars = AgentVars::all_trainable(&mut tape, agent).unwrap();
    let out = match term {
        Term::Bellman => {
            critic_loss(&mut tape, &vars, Some(anchor), batch, &c, rho)
                .unwrap()
                .bellman
        }
        Term::Feat => critic_loss(&mut tape, &vars, Some(anchor), batch, &c, rho)
            .unwrap()
            .feat
            .unwrap(),
        Term::Sac => {
            actor_loss(&mut tape, &vars, Some(anchor), batch, &c, rho)
                .unwrap()
                .sac
        }
        Term::Mse | Term::Kl => actor_loss(&mut tape, &vars, Some(anchor), batch, &c, rho)
            .unwrap()
            .anchor
            .unwrap(),
    };
    let grads = tape.backward(out).unwrap();
    let leaves: Vec<Var> = match group {
        Group::Critic => vars
            .encoder
            .leaves()
            .into_iter()
            .chain(vars.critics[0].leaves())
            .chain(vars.critics[1].leaves())
            .collect(),
        Group::Actor => vars.actor.leaves(),
    };
    let g = leaves
        .into_iter()
        .flat_map(|v| grads.get_or_zeros(&tape, v).into_data())
        .collect();
    (tape.value(out).item(), g)
}

fn fd_check(term: Term) {
    let group = match term {
        Term::Bellman | Term::Feat => Group::Critic,
        _ => Group::Actor,
    };
    let mut worst: f64 = 0.0;
    for point in 0..20u64 {
        let agent = perturbed_agent(100 + point);
        let theta0 = Agent::<f64>::new(tiny_dims(), 300 + point);
        let batch = random_batch(&agent.dims, 6, 500 + point);
        let anchor = anchor_targets(&theta0, &batch);
        let (_, analytic) = term_and_grad(&agent, &anchor, &batch, term);
        // sg(y): the oracle differentiates with y frozen at its current value,
        // i.e. a terminal batch whose rewards are y.
        let mut frozen = batch.clone();
        if let Term::Bellman = term {
            frozen.rewards = rohil_core::numerics::Tensor::new(
                &[6, 1],
                target_values(&agent, &batch, &cfg(AnchorHead::Mse)),
            )
            .unwrap();
            frozen.not_done = frozen.not_done.map(|_| 0.0);
        }
        let x = group_flat(&agent, group);
        let numeric = central_difference(&x, 1e-5, |p| {
            let mut probe = agent.clone();
            set_group(&mut probe, group, p);
            term_and_grad(&probe, &anchor, &frozen, term).0
        });
        let err = relative_error(&analytic, &numeric);
        assert!(
            analytic.iter().any(|&g| g != 0.0),
            "{term:?} point {point}: zero gradient"
        );
        worst = worst.max(err);
        assert!(
            err <= 1e-6,
            "{term:?} point {point}: relative error {err:e}"
        );
    }
    println!("{term:?}: worst relative error {worst:e} over 20 points");
}

#[test]
fn bellman_gradient_matches_finite_differences() {
    fd_check(Term::Bellman);
}

#[test]
fn feature_anchor_gradient_matches_finite_differences() {
    fd_check(Term::Feat);
}

#[test]
fn sac_actor_gradient_matches_finite_differences() {
    fd_check(Term::Sac);
}

#[test]
fn mean_anchor_gradient_matches_finite_differences() {
    fd_check(Term::Mse);
}

#[test]
fn kl_anchor_gradient_matches_finite_differences() {
    fd_check(Term::Kl);
}

#[test]
fn bindings_do_not_change_values() {
    let agent = perturbed_agent(600);
    let batch = random_batch(&agent.dims, 4, 601);
    let c = LearnerConfig::default();
    let mut tape = Tape::new();
    let vars = AgentVars::bind(&mut tape, &agent, [Binding::Constant; 4]).unwrap();
    let y = bellman_target(&mut tape, &vars, &batch, &c).unwrap();
    assert_eq!(
        tape.value(y).data(),
        target_values(&agent, &batch, &c).as_slice()
    );
}
