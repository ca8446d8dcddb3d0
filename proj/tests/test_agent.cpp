#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "feudal/checkpoint.hpp"
#include "feudal/fun_agent.hpp"
#include "feudal/gradcheck.hpp"
#include "feudal/rng.hpp"

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
  cfg.epsilon_goal = 0.0;
  cfg.clip_rewards = false;
  return cfg;
}

Tensor random_obs(Rng& rng, std::size_t dim) {
  Tensor t = Tensor::zeros({dim});
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void zero_layer(LinearLayer& layer) {
  layer.weight.fill(0.0);
  if (layer.has_bias()) layer.bias.fill(0.0);
}

}  // namespace

TEST_CASE("config invariants: k < d, c >= 1, no_dilation forces r = 1") {
  AgentConfig cfg = small_config();
  cfg.k = cfg.d;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.c = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.no_dilation = true;
  cfg.normalize();
  CHECK(cfg.r == 1);
  cfg.validate();
}

TEST_CASE("percept: zero weights give a zero feature vector") {
  FunAgent agent(small_config(), 1);
  zero_layer(agent.percept);
  Rng rng(2);
  Tensor z = agent.percept_forward(random_obs(rng, 6));
  for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("percept: negative pre-activations clamp to exactly zero") {
  FunAgent agent(small_config(), 1);
  zero_layer(agent.percept);
  // One positive row, one forced-negative row.
  agent.percept.weight.at(0, 0) = 1.0;
  agent.percept.weight.at(1, 0) = -1.0;
  Tensor obs = Tensor::zeros({6});
  obs.data[0] = 0.7;
  Tensor z = agent.percept_forward(obs);
  CHECK(z.data[0] == 0.7);
  CHECK(z.data[1] == 0.0);
}

TEST_CASE("percept and mspace match an affine-plus-clamp recomputation") {
  FunAgent agent(small_config(), 3);
  Rng rng(4);
  Tensor obs = random_obs(rng, 6);
  Tensor z = agent.percept_forward(obs);
  for (std::size_t o = 0; o < z.size(); ++o) {
    double pre = agent.percept.bias.data[o];
    for (std::size_t i = 0; i < obs.size(); ++i) {
      pre += agent.percept.weight.at(o, i) * obs.data[i];
    }
    CHECK(z.data[o] == doctest::Approx(std::max(0.0, pre)).epsilon(1e-14));
  }
  Tensor s = agent.mspace_forward(z);
  for (std::size_t o = 0; o < s.size(); ++o) {
    double pre = agent.mspace.bias.data[o];
    for (std::size_t i = 0; i < z.size(); ++i) {
      pre += agent.mspace.weight.at(o, i) * z.data[i];
    }
    CHECK(s.data[o] == doctest::Approx(std::max(0.0, pre)).epsilon(1e-14));
  }
}

TEST_CASE("emitted goals have unit norm at every step") {
  AgentConfig cfg = small_config();
  cfg.epsilon_goal = 0.05;
  FunAgent agent(cfg, 5);
  Rng obs_rng(6), agent_rng(7);
  agent.reset_episode();
  for (int t = 0; t < 500; ++t) {
    FunStepResult res =
        agent.forward_step(random_obs(obs_rng, 6), &agent_rng, nullptr, nullptr);
    CHECK(std::abs(norm2(res.goal) - 1.0) <= 1e-6);
  }
}

TEST_CASE("dilation schedule: only core t mod r is touched by step t") {
  AgentConfig cfg = small_config();
  cfg.r = 3;
  FunAgent agent(cfg, 8);
  Rng obs_rng(9);
  agent.reset_episode();

  auto cores_snapshot = [&]() {
    std::vector<LstmState> out;
    for (const auto& c : agent.runtime().manager.cores) out.push_back(c);
    return out;
  };

  std::vector<std::vector<LstmState>> history;
  history.push_back(cores_snapshot());  // before t = 0
  for (int t = 0; t < 4; ++t) {
    agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, nullptr);
    history.push_back(cores_snapshot());
  }

  // Core 0 state after t = 3 differs from its state after t = 0.
  CHECK(history[4][0].h.data != history[1][0].h.data);
  // Cores 1 and 2 are bit-identical between t = 2 and t = 3.
  for (std::size_t core : {1u, 2u}) {
    CHECK(history[4][core].h.data == history[3][core].h.data);
    CHECK(history[4][core].c.data == history[3][core].c.data);
  }
  // And at every step, all cores other than t mod r are untouched bitwise.
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t core = 0; core < 3; ++core) {
      if (core == t % 3) continue;
      CHECK(history[t + 1][core].h.data == history[t][core].h.data);
      CHECK(history[t + 1][core].c.data == history[t][core].c.data);
    }
  }
}

TEST_CASE("epsilon = 1 goals pass a sampling uniformity smoke test") {
  AgentConfig cfg = small_config(8, 3);
  cfg.d = 8;
  cfg.k = 4;
  cfg.epsilon_goal = 1.0;
  FunAgent agent(cfg, 10);
  Rng obs_rng(11), agent_rng(12);
  agent.reset_episode();

  Tensor mean = Tensor::zeros({8});
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    FunStepResult res =
        agent.forward_step(random_obs(obs_rng, 8), &agent_rng, nullptr, nullptr);
    CHECK(res.goal_source == GoalSource::sampled);
    CHECK(std::abs(norm2(res.goal) - 1.0) <= 1e-9);
    axpy(1.0 / n, res.goal, mean);
  }
  CHECK(norm2(mean) < 0.05);
}

TEST_CASE("degenerate pooled output falls back to the previous goal") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 13);
  zero_layer(agent.goal_head);  // raw outputs identically zero
  Rng obs_rng(14);
  agent.reset_episode();
  FunStepResult res =
      agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, nullptr);
  CHECK(res.goal_source == GoalSource::degenerate);
  // Fallback at t = 0 is the first basis vector.
  CHECK(res.goal.data[0] == 1.0);
  CHECK(agent.runtime().degenerate_goals == 1);
  res = agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, nullptr);
  CHECK(res.goal_source == GoalSource::degenerate);
  CHECK(agent.runtime().degenerate_goals == 2);
  CHECK(std::abs(norm2(res.goal) - 1.0) <= 1e-9);
}

TEST_CASE("goal window: zero history except the current goal reduces to phi(g_t)") {
  GoalHistory h(3, 4);
  h.push(0, Tensor::zeros({4}), Tensor::zeros({4}));
  h.push(1, Tensor::zeros({4}), Tensor::zeros({4}));
  Tensor g = Tensor::vec({0.5, -0.5, 0.5, -0.5});
  h.push(2, g, Tensor::zeros({4}));
  Tensor sum = h.goal_sum();
  CHECK(sum.data == g.data);
}

TEST_CASE("goal window: identity-like phi extracts leading components of the sum") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 15);
  agent.phi.weight.fill(0.0);
  for (std::size_t j = 0; j < cfg.k; ++j) agent.phi.weight.at(j, j) = 1.0;

  Tensor e1 = Tensor::zeros({cfg.d});
  e1.data[0] = 1.0;
  Tensor e2 = Tensor::zeros({cfg.d});
  e2.data[1] = 1.0;
  Tensor sum = e1;
  axpy(1.0, e2, sum);
  Tensor w = agent.embed_goal_window(sum);
  CHECK(w.data[0] == 1.0);
  CHECK(w.data[1] == 1.0);
  CHECK(w.data[2] == 0.0);
}

TEST_CASE("goal window sum matches a sum-then-matvec recomputation") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 16);
  Rng rng(17);
  GoalHistory h(cfg.c, cfg.d);
  for (std::size_t t = 0; t < 5; ++t) {
    h.push(t, random_obs(rng, cfg.d), random_obs(rng, cfg.d));
  }
  Tensor sum = h.goal_sum();
  Tensor w = agent.embed_goal_window(sum);
  for (std::size_t j = 0; j < cfg.k; ++j) {
    double expect = 0.0;
    for (std::size_t i = 0; i < cfg.d; ++i) {
      expect += agent.phi.weight.at(j, i) * sum.data[i];
    }
    CHECK(w.data[j] == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("goal history keeps at most c + 1 entries, padded-empty at the start") {
  GoalHistory h(2, 3);
  CHECK(h.size() == 0);
  for (std::size_t t = 0; t < 6; ++t) {
    h.push(t, Tensor::zeros({3}), Tensor::zeros({3}));
    CHECK(h.size() == std::min<std::size_t>(t + 1, 3));
  }
  CHECK(h.entry(0).step == 3);  // oldest retained
}

TEST_CASE("worker: a zero goal embedding forces the uniform policy") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 18);
  CHECK_FALSE(agent.phi.has_bias());  // bias-free by construction
  agent.phi.weight.fill(0.0);         // w = 0 regardless of goals
  Rng obs_rng(19);
  agent.reset_episode();
  for (int t = 0; t < 10; ++t) {
    FunStepResult res =
        agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, nullptr);
    for (double p : res.pi.data) {
      CHECK(p == doctest::Approx(1.0 / cfg.num_actions).epsilon(1e-15));
    }
  }
}

TEST_CASE("worker: policy sums to one within 1e-12 and logits match the embedding product") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 20);
  Rng obs_rng(21);
  agent.reset_episode();
  for (int t = 0; t < 50; ++t) {
    FunStepCache cache;
    FunStepResult res =
        agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, &cache);
    double sum = 0.0;
    for (double p : res.pi.data) sum += p;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (std::size_t a = 0; a < cfg.num_actions; ++a) {
      double logit = 0.0;
      for (std::size_t j = 0; j < cfg.k; ++j) {
        logit += cache.action_embed.at(a, j) * cache.w.data[j];
      }
      CHECK(cache.logits.data[a] == doctest::Approx(logit).epsilon(1e-13));
    }
  }
}

TEST_CASE("manager influence: nonzero goal embeddings tilt the policy away from uniform") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 22);
  Rng obs_rng(23);
  agent.reset_episode();
  bool found_nonuniform = false;
  for (int t = 0; t < 20; ++t) {
    FunStepCache cache;
    FunStepResult res =
        agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, &cache);
    if (norm2(cache.w) > 1e-6) {
      double spread = 0.0;
      for (double p : res.pi.data) {
        spread = std::max(spread, std::abs(p - 1.0 / cfg.num_actions));
      }
      if (spread > 1e-6) found_nonuniform = true;
    }
  }
  CHECK(found_nonuniform);
}

TEST_CASE("smooth conditioning: the pooled goal window moves by at most 2 per step") {
  AgentConfig cfg = small_config();
  cfg.epsilon_goal = 0.1;
  FunAgent agent(cfg, 24);
  Rng obs_rng(25), agent_rng(26);
  agent.reset_episode();
  Tensor prev_sum;
  for (int t = 0; t < 200; ++t) {
    FunStepCache cache;
    agent.forward_step(random_obs(obs_rng, 6), &agent_rng, nullptr, &cache);
    if (t > 0) {
      Tensor diff = cache.goal_window_sum;
      axpy(-1.0, prev_sum, diff);
      CHECK(norm2(diff) <= 2.0 + 1e-9);
    }
    prev_sum = cache.goal_window_sum;
  }
}

TEST_CASE("value heads: zero weights give zero values; heads are parameter-disjoint") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 27);
  zero_layer(agent.vm_head);
  zero_layer(agent.ve_head);
  zero_layer(agent.vi_head);
  Rng obs_rng(28);
  agent.reset_episode();
  FunStepResult res =
      agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, nullptr);
  CHECK(res.v_manager == 0.0);
  CHECK(res.v_extrinsic == 0.0);
  CHECK(res.v_intrinsic == 0.0);

  // Perturbing the extrinsic head leaves the intrinsic estimate unchanged.
  agent.reset_episode();
  Rng obs_rng2(28);
  agent.ve_head.weight.fill(0.3);
  FunStepResult res2 =
      agent.forward_step(random_obs(obs_rng2, 6), nullptr, nullptr, nullptr);
  CHECK(res2.v_intrinsic == res.v_intrinsic);
  CHECK(res2.v_extrinsic != res.v_extrinsic);
}

TEST_CASE("value head gradients match finite differences") {
  GradCheckResult r = gradcheck_value_heads(2024, 20);
  CHECK(r.pass);
}

TEST_CASE("act: a deterministic distribution always picks its support") {
  Rng rng(29);
  for (int i = 0; i < 50; ++i) {
    CHECK(act(Tensor::vec({1.0, 0.0, 0.0}), rng) == 0);
  }
}

TEST_CASE("act: empirical frequency tracks the distribution") {
  Rng rng(30);
  Tensor pi = Tensor::vec({0.5, 0.5});
  std::size_t count0 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    if (act(pi, rng) == 0) ++count0;
  }
  double freq = static_cast<double>(count0) / n;
  CHECK(std::abs(freq - 0.5) < 0.01);
}

TEST_CASE("act: same seed gives the same action sequence; bad pi is rejected") {
  Tensor pi = Tensor::vec({0.25, 0.25, 0.5});
  Rng a(31), b(31);
  for (int i = 0; i < 100; ++i) CHECK(act(pi, a) == act(pi, b));
  CHECK_THROWS_AS(act(Tensor::vec({0.7, 0.7}), a), std::invalid_argument);
}

TEST_CASE("forward pass is deterministic given parameters, observations and seed") {
  AgentConfig cfg = small_config();
  cfg.epsilon_goal = 0.2;
  FunAgent a(cfg, 77), b(cfg, 77);
  Rng ra(5), rb(5);
  Rng obs_a(6), obs_b(6);
  a.reset_episode();
  b.reset_episode();
  for (int t = 0; t < 100; ++t) {
    FunStepResult sa = a.forward_step(random_obs(obs_a, 6), &ra, nullptr, nullptr);
    FunStepResult sb = b.forward_step(random_obs(obs_b, 6), &rb, nullptr, nullptr);
    CHECK(sa.pi.data == sb.pi.data);
    CHECK(sa.goal.data == sb.goal.data);
    CHECK(sa.v_manager == sb.v_manager);
  }
}

TEST_CASE("checkpoint: save, load, and forward bit-identically") {
  AgentConfig cfg = small_config();
  cfg.epsilon_goal = 0.0;
  FunAgent original(cfg, 41);
  std::string path = "test_agent_checkpoint.bin";
  {
    ParamList params = original.params();
    save_checkpoint(path, params);
  }

  FunAgent restored(cfg, 999);  // different init, then overwritten
  {
    ParamList params = restored.params();
    load_checkpoint(path, params);
  }

  Rng obs_a(42), obs_b(42);
  original.reset_episode();
  restored.reset_episode();
  for (int t = 0; t < 30; ++t) {
    FunStepResult sa =
        original.forward_step(random_obs(obs_a, 6), nullptr, nullptr, nullptr);
    FunStepResult sb =
        restored.forward_step(random_obs(obs_b, 6), nullptr, nullptr, nullptr);
    CHECK(std::memcmp(sa.pi.data.data(), sb.pi.data.data(),
                      sa.pi.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(sa.goal.data.data(), sb.goal.data.data(),
                      sa.goal.size() * sizeof(double)) == 0);
    CHECK(sa.v_manager == sb.v_manager);
    CHECK(sa.v_extrinsic == sb.v_extrinsic);
    CHECK(sa.v_intrinsic == sb.v_intrinsic);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint: shape mismatch is an explicit incompatibility error") {
  AgentConfig cfg = small_config();
  FunAgent a(cfg, 1);
  std::string path = "test_agent_checkpoint_mismatch.bin";
  {
    ParamList params = a.params();
    save_checkpoint(path, params);
  }
  AgentConfig other = cfg;
  other.worker_hidden = 7;
  FunAgent b(other, 1);
  ParamList params = b.params();
  CHECK_THROWS_WITH_AS(load_checkpoint(path, params),
                       doctest::Contains("incompatible"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("episode reset clears recurrent state, ring and history") {
  AgentConfig cfg = small_config();
  FunAgent agent(cfg, 50);
  Rng obs_rng(51);
  agent.reset_episode();
  for (int t = 0; t < 7; ++t) {
    agent.forward_step(random_obs(obs_rng, 6), nullptr, nullptr, nullptr);
  }
  CHECK(agent.runtime().manager.step_counter == 7);
  CHECK(agent.runtime().history.size() > 0);
  agent.reset_episode();
  CHECK(agent.runtime().manager.step_counter == 0);
  CHECK(agent.runtime().history.size() == 0);
  CHECK(agent.runtime().manager.output_ring.empty());
  for (const auto& core : agent.runtime().manager.cores) {
    for (double v : core.h.data) CHECK(v == 0.0);
    for (double v : core.c.data) CHECK(v == 0.0);
  }
}

TEST_CASE("all exported activations stay finite over a long random run") {
  AgentConfig cfg = small_config();
  cfg.epsilon_goal = 0.05;
  FunAgent agent(cfg, 60);
  Rng obs_rng(61), agent_rng(62);
  agent.reset_episode();
  for (int t = 0; t < 1000; ++t) {
    FunStepResult res =
        agent.forward_step(random_obs(obs_rng, 6), &agent_rng, nullptr, nullptr);
    CHECK(all_finite(res.pi));
    CHECK(all_finite(res.goal));
    CHECK(all_finite(res.latent));
    if (t % 97 == 0) agent.reset_episode();
  }
}
