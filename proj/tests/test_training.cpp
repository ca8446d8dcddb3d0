#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "feudal/gradcheck.hpp"
#include "feudal/training.hpp"

using namespace feudal;

namespace {

AgentConfig small_config(std::size_t obs_dim = 6, std::size_t actions = 3) {
  AgentConfig cfg;
  cfg.obs_dim = obs_dim;
  cfg.num_actions = actions;
  cfg.d = 5;
  cfg.k = 3;
  cfg.c = 3;
  cfg.r = 3;
  cfg.percept_hidden = 6;
  cfg.worker_hidden = 5;
  cfg.manager_hidden = 5;
  cfg.alpha = 0.6;
  cfg.epsilon_goal = 0.0;
  cfg.clip_rewards = false;
  return cfg;
}

Tensor random_vec(Rng& rng, std::size_t n) {
  Tensor t = Tensor::zeros({n});
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

/// Feature-vector environment with scriptable rewards.
class StubEnv final : public Environment {
 public:
  StubEnv(std::size_t obs_dim, std::size_t num_actions,
          std::vector<double> rewards, std::uint64_t seed)
      : obs_dim_(obs_dim),
        num_actions_(num_actions),
        rewards_(std::move(rewards)),
        rng_(seed) {}

  std::size_t obs_dim() const override { return obs_dim_; }
  std::size_t num_actions() const override { return num_actions_; }
  std::string name() const override { return "stub"; }
  std::size_t max_episode_steps() const override { return rewards_.size(); }
  double optimal_return() const override { return 0.0; }

  EnvObservation reset_episode() override {
    t_ = 0;
    return {random_vec(rng_, obs_dim_)};
  }
  EnvStep step(std::size_t) override {
    double r = rewards_[t_];
    ++t_;
    bool terminal = t_ >= rewards_.size();
    return {{random_vec(rng_, obs_dim_)}, r, terminal, terminal};
  }

 private:
  std::size_t obs_dim_, num_actions_;
  std::vector<double> rewards_;
  std::size_t t_ = 0;
  Rng rng_;
};

struct CollectedProbe {
  FunAgent agent;
  RolloutSegment segment;
  SegmentSignals signals;

  CollectedProbe(const AgentConfig& cfg, std::vector<double> rewards,
                 std::uint64_t seed, std::size_t bptt)
      : agent(cfg, seed) {
    StubEnv env(cfg.obs_dim, cfg.num_actions, std::move(rewards),
                derive_seed(seed, 1));
    Rng rng(derive_seed(seed, 2));
    Tensor obs = env.reset_episode().features;
    agent.reset_episode();
    TrainConfig tcfg;
    tcfg.bptt_len = bptt;
    segment = collect_segment(agent, env, rng, obs, tcfg);
    signals = compute_segment_signals(segment, cfg);
  }
};

double grad_norm(ParamList& params) {
  double acc = 0.0;
  for (auto& p : params) acc += dot(*p.grad, *p.grad);
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("discounted returns: hand recursion") {
  std::vector<double> rewards{0.0, 0.0, 1.0};
  std::vector<char> terminals{0, 0, 0};
  auto r = discounted_returns(rewards, terminals, 0.9, 0.0);
  CHECK(r[0] == doctest::Approx(0.81).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(r[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("discounted returns: gamma 0 returns the rewards themselves") {
  std::vector<double> rewards{0.3, -0.7, 0.2};
  std::vector<char> terminals{0, 0, 0};
  auto r = discounted_returns(rewards, terminals, 0.0, 5.0);
  CHECK(r == rewards);
}

TEST_CASE("discounted returns match brute-force forward summation") {
  Rng rng(3);
  for (int n = 0; n < 50; ++n) {
    std::size_t T = 1 + rng.below(12);
    double gamma = rng.uniform01();
    double bootstrap = rng.uniform(-2.0, 2.0);
    std::vector<double> rewards(T);
    for (auto& v : rewards) v = rng.uniform(-1.0, 1.0);
    std::vector<char> terminals(T, 0);
    bool ended = rng.below(2) == 0;
    if (ended) terminals[T - 1] = 1;

    auto fast = discounted_returns(rewards, terminals, gamma, bootstrap);
    for (std::size_t t = 0; t < T; ++t) {
      double expect = 0.0;
      double g = 1.0;
      for (std::size_t k = t; k < T; ++k) {
        expect += g * rewards[k];
        g *= gamma;
      }
      if (!ended) expect += g * bootstrap;
      CHECK(fast[t] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("discounted returns: terminal zeroes the bootstrap") {
  std::vector<double> rewards{1.0};
  std::vector<char> terminals{1};
  auto r = discounted_returns(rewards, terminals, 0.9, 100.0);
  CHECK(r[0] == 1.0);
}

TEST_CASE("intrinsic reward: moving exactly along a constant goal direction") {
  const std::size_t c = 4, d = 3;
  GoalHistory h(c, d);
  Tensor u = Tensor::vec({1.0, 2.0, -1.0});
  double un = norm2(u);
  Tensor g = u;
  scale(g, 1.0 / un);
  for (std::size_t t = 0; t <= 9; ++t) {
    Tensor s = u;
    scale(s, static_cast<double>(t));
    h.push(t, g, s);
    if (t == 0) continue;
    double r = intrinsic_reward(h, t, c, false);
    double expect = static_cast<double>(std::min(c, t)) / static_cast<double>(c);
    CHECK(r == doctest::Approx(expect).epsilon(1e-12));
    if (t >= c) CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("intrinsic reward: no movement gives zero by the degenerate-norm rule") {
  const std::size_t c = 3, d = 4;
  GoalHistory h(c, d);
  Tensor s = Tensor::vec({0.5, 0.5, 0.5, 0.5});
  Rng rng(9);
  for (std::size_t t = 0; t < 6; ++t) {
    h.push(t, random_vec(rng, d), s);
    if (t >= 1) CHECK(intrinsic_reward(h, t, c, false) == 0.0);
  }
}

TEST_CASE("intrinsic reward matches independent term-by-term recomputation") {
  const std::size_t c = 3, d = 4;
  Rng rng(11);
  std::vector<Tensor> goals, latents;
  GoalHistory h(c, d);
  for (std::size_t t = 0; t < 10; ++t) {
    goals.push_back(random_vec(rng, d));
    latents.push_back(random_vec(rng, d));
    h.push(t, goals[t], latents[t]);
    if (t == 0) continue;
    double expect = 0.0;
    for (std::size_t i = 1; i <= std::min(c, t); ++i) {
      Tensor diff = latents[t];
      axpy(-1.0, latents[t - i], diff);
      double nd = norm2(diff), ng = norm2(goals[t - i]);
      if (nd < 1e-8 || ng < 1e-8) continue;
      expect += dot(diff, goals[t - i]) / (nd * ng);
    }
    expect /= static_cast<double>(c);
    CHECK(intrinsic_reward(h, t, c, false) ==
          doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("intrinsic reward terms: absolute-goal variant compares states to goals") {
  const std::size_t c = 2, d = 3;
  GoalHistory h(c, d);
  Tensor g0 = Tensor::vec({1.0, 0.0, 0.0});
  h.push(0, g0, Tensor::vec({0.0, 1.0, 0.0}));
  h.push(1, Tensor::vec({0.0, 1.0, 0.0}), Tensor::vec({1.0, 0.0, 0.0}));
  // term i=1 at t=1: d_cos(s_1, g_0) = 1
  auto terms = intrinsic_reward_terms(h, 1, c, true);
  REQUIRE(terms.size() == 1);
  CHECK(terms[0] == doctest::Approx(1.0));
}

TEST_CASE("manager upstream: zero advantage yields a zero goal gradient") {
  AgentConfig cfg = small_config();
  CollectedProbe probe(cfg, {0, 0, 0, 0, 0, 0, 0}, 21, 7);
  // Zero advantages by hand; the builder must then emit zero dgoal.
  for (auto& a : probe.signals.adv_manager) a = 0.0;
  auto ups = build_upstreams(probe.segment, probe.signals, cfg, 0.0,
                             static_cast<unsigned>(LossMask::alignment));
  for (const auto& up : ups) {
    for (double v : up.dgoal.data) CHECK(v == 0.0);
  }
}

TEST_CASE("alignment gradient is orthogonal to the goal (scale invariance)") {
  Rng rng(23);
  for (int n = 0; n < 100; ++n) {
    Tensor target = random_vec(rng, 5);
    Tensor g = random_vec(rng, 5);
    scale(g, 1.0 / norm2(g));
    Tensor dg = Tensor::zeros({5});
    cosine_similarity_backward(target, g, 1.0, nullptr, &dg);
    CHECK(std::abs(dot(dg, g)) < 1e-10);
  }
  // Parallel case: the gradient vanishes entirely.
  Tensor u = Tensor::vec({1.0, -2.0, 0.5, 0.0, 1.0});
  Tensor g = u;
  scale(g, 2.0 / norm2(u));
  Tensor dg = Tensor::zeros({5});
  cosine_similarity_backward(u, g, 1.0, nullptr, &dg);
  for (double v : dg.data) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("manager path gradients match finite differences") {
  GradCheckResult r = gradcheck_manager_path(31, 25);
  CHECK(r.pass);
  CHECK(r.worst_rel_err < 1e-5);
}

TEST_CASE("worker path gradients match finite differences") {
  GradCheckResult r = gradcheck_worker_path(37, 25);
  CHECK(r.pass);
  CHECK(r.worst_rel_err < 1e-5);
}

TEST_CASE("worker upstream: zero advantage and zero entropy weight give zero gradient") {
  AgentConfig cfg = small_config();
  CollectedProbe probe(cfg, {0, 0, 0, 0, 0}, 41, 5);
  for (auto& a : probe.signals.adv_worker) a = 0.0;
  auto ups = build_upstreams(probe.segment, probe.signals, cfg, 0.0,
                             static_cast<unsigned>(LossMask::policy) |
                                 static_cast<unsigned>(LossMask::entropy));
  ParamList params = probe.agent.params();
  zero_grads(params);
  probe.agent.backward_segment(probe.segment.caches, ups, false, true);
  CHECK(grad_norm(params) == 0.0);
}

TEST_CASE("policy gradient pushes probability toward a rewarded action") {
  AgentConfig cfg = small_config(4, 2);
  cfg.alpha = 0.0;
  FunAgent agent(cfg, 43);
  // Zero critics so the advantage equals the (positive) return.
  agent.ve_head.weight.fill(0.0);
  agent.ve_head.bias.fill(0.0);
  agent.vm_head.weight.fill(0.0);
  agent.vm_head.bias.fill(0.0);

  StubEnv env(4, 2, {1.0}, 44);  // single-step bandit paying +1
  Tensor obs0 = env.reset_episode().features;
  Tensor obs = obs0;
  agent.reset_episode();
  RolloutSegment seg = collect_segment_forced(agent, env, {0}, obs);
  SegmentSignals sig = compute_segment_signals(seg, cfg);
  CHECK(sig.adv_worker[0] == doctest::Approx(1.0));

  double p_before = seg.caches[0].pi.data[0];
  ParamList params = agent.params();
  zero_grads(params);
  TrainConfig tcfg;
  tcfg.entropy_weight = 0.0;
  accumulate_segment_gradients(agent, seg, sig, tcfg,
                               static_cast<unsigned>(LossMask::policy));
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      p.value->data[i] -= 1e-3 * p.grad->data[i];
    }
  }
  agent.reset_episode();
  FunStepResult res = agent.forward_step(obs0, nullptr, nullptr, nullptr);
  CHECK(res.pi.data[0] > p_before);
}

TEST_CASE("critic upstream: value equal to return gives zero gradient; hand derivative") {
  AgentConfig cfg = small_config();
  CollectedProbe probe(cfg, {0.5, -0.5, 0.0, 1.0}, 47, 4);
  // Force "perfect critic" by rewriting the returns to the recorded values.
  SegmentSignals sig = probe.signals;
  for (std::size_t t = 0; t < probe.segment.steps.size(); ++t) {
    sig.returns_manager[t] = probe.segment.caches[t].v_manager;
    sig.returns_extrinsic[t] = probe.segment.caches[t].v_extrinsic;
    sig.returns_intrinsic[t] = probe.segment.caches[t].v_intrinsic;
  }
  auto ups = build_upstreams(probe.segment, sig, cfg, 0.0,
                             static_cast<unsigned>(LossMask::critics));
  for (const auto& up : ups) {
    CHECK(up.dv_manager == 0.0);
    CHECK(up.dv_extrinsic == 0.0);
    CHECK(up.dv_intrinsic == 0.0);
  }

  // Scalar case: V = 0, R = 2 gives dLoss/dV = -2.
  sig.returns_extrinsic[0] = 2.0;
  probe.segment.caches[0].v_extrinsic = 0.0;
  ups = build_upstreams(probe.segment, sig, cfg, 0.0,
                        static_cast<unsigned>(LossMask::critics));
  CHECK(ups[0].dv_extrinsic == doctest::Approx(-2.0));
}

TEST_CASE("train_segment: zero rewards, zero critics, zero entropy leave parameters unchanged") {
  AgentConfig cfg = small_config();
  cfg.alpha = 0.0;  // the intrinsic pathway is disabled entirely
  FunAgent agent(cfg, 53);
  agent.vm_head.weight.fill(0.0);
  agent.vm_head.bias.fill(0.0);
  agent.ve_head.weight.fill(0.0);
  agent.ve_head.bias.fill(0.0);
  agent.vi_head.weight.fill(0.0);
  agent.vi_head.bias.fill(0.0);

  ParamList params = agent.params();
  std::vector<Tensor> before;
  for (auto& p : params) before.push_back(*p.value);

  StubEnv env(6, 3, std::vector<double>(12, 0.0), 54);
  Rng rng(55);
  Tensor obs = env.reset_episode().features;
  agent.reset_episode();
  RmsProp opt(1e-2, 0.99, 1e-8);
  TrainConfig tcfg;
  tcfg.entropy_weight = 0.0;
  tcfg.bptt_len = 12;
  double acc = 0.0;
  train_segment(agent, env, rng, obs, acc, opt, tcfg, 0);

  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(params[i].value->data == before[i].data);
  }
}

TEST_CASE("train_segment: reward clipping records a raw 5 as 1") {
  AgentConfig cfg = small_config();
  cfg.clip_rewards = true;
  FunAgent agent(cfg, 57);
  StubEnv env(6, 3, {5.0, -3.0, 0.5}, 58);
  Rng rng(59);
  Tensor obs = env.reset_episode().features;
  agent.reset_episode();
  TrainConfig tcfg;
  tcfg.bptt_len = 3;
  RolloutSegment seg = collect_segment(agent, env, rng, obs, tcfg);
  CHECK(seg.steps[0].reward_raw == 5.0);
  CHECK(seg.steps[0].reward == 1.0);
  CHECK(seg.steps[1].reward == -1.0);
  CHECK(seg.steps[2].reward == 0.5);
}

TEST_CASE("gradient isolation: worker losses never reach the manager in the feudal wiring") {
  AgentConfig cfg = small_config();
  CollectedProbe probe(cfg, {1, 0, -1, 0, 1, 0, 0}, 61, 7);
  ParamList params = probe.agent.params();
  zero_grads(params);
  TrainConfig tcfg;
  tcfg.entropy_weight = 1e-2;
  accumulate_segment_gradients(probe.agent, probe.segment, probe.signals, tcfg,
                               static_cast<unsigned>(LossMask::policy) |
                                   static_cast<unsigned>(LossMask::entropy));
  for (auto& p : params) {
    bool manager_side = p.name.rfind("manager_cell", 0) == 0 ||
                        p.name.rfind("goal_head", 0) == 0 ||
                        p.name.rfind("vm_head", 0) == 0;
    if (manager_side) {
      for (double v : p.grad->data) CHECK(v == 0.0);
    }
  }
  // phi and the worker trunk do receive gradients.
  double phi_norm = 0.0, worker_norm = 0.0;
  for (auto& p : params) {
    if (p.name.rfind("phi", 0) == 0) phi_norm += dot(*p.grad, *p.grad);
    if (p.name.rfind("worker_cell", 0) == 0) {
      worker_norm += dot(*p.grad, *p.grad);
    }
  }
  CHECK(phi_norm > 0.0);
  CHECK(worker_norm > 0.0);
}

TEST_CASE("gradient isolation: alignment losses never touch the action embedding or phi") {
  AgentConfig cfg = small_config();
  CollectedProbe probe(cfg, {1, 0, -1, 0, 1, 0, 0}, 67, 7);
  REQUIRE(probe.signals.manager_update[0] == 1);
  ParamList params = probe.agent.params();
  zero_grads(params);
  TrainConfig tcfg;
  accumulate_segment_gradients(probe.agent, probe.segment, probe.signals, tcfg,
                               static_cast<unsigned>(LossMask::alignment));
  double manager_norm = 0.0;
  for (auto& p : params) {
    bool worker_only = p.name.rfind("u_head", 0) == 0 ||
                       p.name.rfind("phi", 0) == 0 ||
                       p.name.rfind("worker_cell", 0) == 0 ||
                       p.name.rfind("ve_head", 0) == 0 ||
                       p.name.rfind("vi_head", 0) == 0 ||
                       p.name.rfind("vm_head", 0) == 0;
    if (worker_only) {
      for (double v : p.grad->data) CHECK(v == 0.0);
    }
    if (p.name.rfind("manager_cell", 0) == 0 ||
        p.name.rfind("goal_head", 0) == 0) {
      manager_norm += dot(*p.grad, *p.grad);
    }
  }
  CHECK(manager_norm > 0.0);
}

TEST_CASE("non-feudal wiring: worker losses do flow into the manager") {
  AgentConfig cfg = small_config();
  cfg.mode = FunMode::non_feudal;
  CollectedProbe probe(cfg, {1, 0, -1, 0, 1, 0, 0}, 71, 7);
  CHECK_FALSE(probe.signals.train_vm);
  CHECK_FALSE(probe.signals.train_vi);
  ParamList params = probe.agent.params();
  zero_grads(params);
  TrainConfig tcfg;
  tcfg.entropy_weight = 1e-2;
  accumulate_segment_gradients(probe.agent, probe.segment, probe.signals, tcfg);
  double manager_norm = 0.0;
  for (auto& p : params) {
    if (p.name.rfind("manager_cell", 0) == 0 ||
        p.name.rfind("goal_head", 0) == 0) {
      manager_norm += dot(*p.grad, *p.grad);
    }
  }
  CHECK(manager_norm > 0.0);
  GradCheckResult r = gradcheck_non_feudal(73, 20);
  CHECK(r.pass);
}

TEST_CASE("dual discounts: equal gammas and terminal cut give identical return sequences") {
  AgentConfig cfg = small_config();
  cfg.gamma_manager = cfg.gamma_worker;
  cfg.alpha = 0.0;
  CollectedProbe probe(cfg, {0.5, -1.0, 0.0, 1.0}, 79, 4);  // terminal segment
  REQUIRE(probe.segment.ended_terminal);
  for (std::size_t t = 0; t < probe.segment.steps.size(); ++t) {
    CHECK(probe.signals.returns_manager[t] ==
          probe.signals.returns_extrinsic[t]);
  }
}

TEST_CASE("horizon bookkeeping: alignment targets are exactly c steps ahead") {
  AgentConfig cfg = small_config();
  CollectedProbe probe(cfg, std::vector<double>(9, 0.25), 83, 9);
  const std::size_t T = probe.segment.steps.size();
  REQUIRE(T == 9);
  std::size_t active = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (!probe.signals.manager_update[t]) continue;
    ++active;
    const Tensor& s_ahead = (t + cfg.c < T)
                                ? probe.segment.caches[t + cfg.c].s
                                : probe.segment.cut.latent;
    Tensor expect = s_ahead;
    axpy(-1.0, probe.segment.caches[t].s, expect);
    CHECK(probe.signals.alignment_target[t].data == expect.data);
  }
  CHECK(active + probe.signals.skipped_manager +
            probe.signals.excluded_goal_steps ==
        T);
  CHECK(probe.signals.skipped_manager == cfg.c - 1);  // the cut resolves t+c == T
}

TEST_CASE("exploration-sampled goals are excluded from alignment updates") {
  AgentConfig cfg = small_config();
  cfg.epsilon_goal = 1.0;
  CollectedProbe probe(cfg, std::vector<double>(8, 0.5), 89, 8);
  for (std::size_t t = 0; t < probe.segment.steps.size(); ++t) {
    CHECK(probe.segment.caches[t].goal_source == GoalSource::sampled);
    CHECK(probe.signals.manager_update[t] == 0);
  }
  CHECK(probe.signals.excluded_goal_steps > 0);
  // The worker still trains and intrinsic rewards still accrue.
  ParamList params = probe.agent.params();
  zero_grads(params);
  TrainConfig tcfg;
  tcfg.entropy_weight = 1e-2;
  accumulate_segment_gradients(probe.agent, probe.segment, probe.signals, tcfg);
  double worker_norm = 0.0;
  for (auto& p : params) {
    if (p.name.rfind("worker_cell", 0) == 0) worker_norm += dot(*p.grad, *p.grad);
  }
  CHECK(worker_norm > 0.0);
}

TEST_CASE("transition policy gradient equivalence on random instances") {
  Rng outer(97);
  double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    AgentConfig cfg = small_config();
    FunAgent agent(cfg, derive_seed(101, n));
    std::vector<Tensor> observations;
    std::vector<double> advantages;
    for (std::size_t t = 0; t < cfg.c + 5; ++t) {
      observations.push_back(random_vec(outer, cfg.obs_dim));
      advantages.push_back(outer.uniform(-2.0, 2.0));
    }
    TpgReport rep =
        transition_pg_equivalence_check(agent, observations, advantages);
    worst = std::max(worst, rep.max_abs_deviation);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("transition policy gradient: zero advantage zeroes both routes") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 103);
  Rng rng(104);
  std::vector<Tensor> observations;
  std::vector<double> advantages;
  for (std::size_t t = 0; t < cfg.c + 4; ++t) {
    observations.push_back(random_vec(rng, cfg.obs_dim));
    advantages.push_back(0.0);
  }
  TpgReport rep =
      transition_pg_equivalence_check(agent, observations, advantages);
  CHECK(rep.max_abs_deviation == 0.0);
}

TEST_CASE("transition policy gradient report: d_cos values equal the matching intrinsic terms") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 107);
  Rng rng(108);
  const std::size_t T = cfg.c + 5;
  std::vector<Tensor> observations;
  std::vector<double> advantages(T, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    observations.push_back(random_vec(rng, cfg.obs_dim));
  }
  // Record the latent/goal trajectory with a fresh forward pass.
  agent.reset_episode();
  GoalHistory h(cfg.c, cfg.d);
  std::vector<std::vector<double>> terms_at(T);
  for (std::size_t t = 0; t < T; ++t) {
    FunStepCache cache;
    agent.forward_step(observations[t], nullptr, nullptr, &cache);
    h.push(t, cache.goal, cache.s);
    if (t >= 1) terms_at[t] = intrinsic_reward_terms(h, t, cfg.c, false);
  }
  TpgReport rep =
      transition_pg_equivalence_check(agent, observations, advantages);
  REQUIRE(rep.dcos_values.size() == T - cfg.c);
  for (std::size_t t = 0; t + cfg.c < T; ++t) {
    // The i = c lookback term at time t + c covers the same state pair.
    const auto& terms = terms_at[t + cfg.c];
    REQUIRE(terms.size() >= cfg.c);
    CHECK(rep.dcos_values[t] ==
          doctest::Approx(terms[cfg.c - 1]).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic: same seed, bit-identical parameters") {
  AgentConfig cfg = small_config();
  cfg.epsilon_goal = 0.1;
  cfg.clip_rewards = true;
  TrainConfig tcfg;
  tcfg.bptt_len = 6;
  tcfg.entropy_weight = 1e-3;

  auto run = [&](std::uint64_t seed) {
    FunAgent agent(cfg, seed);
    StubEnv env(6, 3, {0, 1, 0, -1, 0, 1, 0, 0, 1, 0, 0, 0}, seed + 1);
    Rng rng(seed + 2);
    RmsProp opt(1e-3, 0.99, 1e-8);
    Tensor obs = env.reset_episode().features;
    agent.reset_episode();
    double acc = 0.0;
    std::size_t steps = 0;
    for (int seg = 0; seg < 6; ++seg) {
      SegmentMetrics m = train_segment(agent, env, rng, obs, acc, opt, tcfg,
                                       steps);
      steps += m.steps;
    }
    std::vector<double> flat;
    ParamList params = agent.params();
    for (auto& p : params) {
      flat.insert(flat.end(), p.value->data.begin(), p.value->data.end());
    }
    return flat;
  };

  CHECK(run(500) == run(500));
}

TEST_CASE("full-loss gradients match finite differences") {
  GradCheckResult r = gradcheck_full_loss(109, 20);
  CHECK(r.pass);
}

TEST_CASE("absolute-goals mode: gradients still match finite differences") {
  double worst = 0.0;
  for (int n = 0; n < 15; ++n) {
    AgentConfig cfg = small_config();
    cfg.mode = FunMode::absolute_goals;
    CollectedProbe probe(cfg, {0.5, 0, -0.5, 1, 0, 0, 0.5}, derive_seed(113, n),
                         7);
    TrainConfig tcfg;
    tcfg.entropy_weight = 1e-2;
    ParamList params = probe.agent.params();
    zero_grads(params);
    accumulate_segment_gradients(probe.agent, probe.segment, probe.signals,
                                 tcfg);
    ReplayRequest req =
        make_replay_request(probe.segment, probe.signals, cfg, tcfg);
    auto loss = [&]() { return probe.agent.replay_losses(req).total(); };
    worst = std::max(worst, fd_check_params(params, loss));
  }
  CHECK(worst < 1e-5);
}
