#include "feudal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "feudal/training.hpp"

namespace feudal {

double fd_relative_error(double analytic, double fd) {
  return std::abs(analytic - fd) /
         std::max({1.0, std::abs(analytic), std::abs(fd)});
}

double fd_check_params(ParamList& params, const std::function<double()>& loss,
                       double step) {
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      double saved = p.value->data[i];
      p.value->data[i] = saved + step;
      double up = loss();
      p.value->data[i] = saved - step;
      double down = loss();
      p.value->data[i] = saved;
      double fd = (up - down) / (2.0 * step);
      worst = std::max(worst, fd_relative_error(p.grad->data[i], fd));
    }
  }
  return worst;
}

namespace {

GradCheckResult make_result(std::string name, double worst, std::size_t cases,
                            std::size_t coords) {
  GradCheckResult r;
  r.name = std::move(name);
  r.worst_rel_err = worst;
  r.cases = cases;
  r.coords = coords;
  r.pass = worst < kFdTolerance;
  return r;
}

Tensor random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros({n});
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Deterministic feature-vector environment for gradient probes: random
/// observations, random rewards in {-1, 0, +1}, terminal after a fixed
/// number of steps.
class ProbeEnv final : public Environment {
 public:
  ProbeEnv(std::size_t obs_dim, std::size_t num_actions,
           std::size_t episode_len, std::uint64_t seed)
      : obs_dim_(obs_dim),
        num_actions_(num_actions),
        episode_len_(episode_len),
        rng_(seed) {}

  std::size_t obs_dim() const override { return obs_dim_; }
  std::size_t num_actions() const override { return num_actions_; }
  std::string name() const override { return "probe"; }
  std::size_t max_episode_steps() const override { return episode_len_; }
  double optimal_return() const override { return 0.0; }

  EnvObservation reset_episode() override {
    steps_ = 0;
    return {random_vec(rng_, obs_dim_)};
  }

  EnvStep step(std::size_t) override {
    ++steps_;
    double reward = static_cast<double>(rng_.below(3)) - 1.0;
    bool terminal = steps_ >= episode_len_;
    return {{random_vec(rng_, obs_dim_)}, reward, terminal, terminal};
  }

 private:
  std::size_t obs_dim_, num_actions_, episode_len_;
  std::size_t steps_ = 0;
  Rng rng_;
};

AgentConfig tiny_agent_config(std::size_t obs_dim, std::size_t actions) {
  AgentConfig cfg;
  cfg.obs_dim = obs_dim;
  cfg.num_actions = actions;
  cfg.d = 4;
  cfg.k = 2;
  cfg.c = 2;
  cfg.r = 2;
  cfg.percept_hidden = 5;
  cfg.worker_hidden = 4;
  cfg.manager_hidden = 4;
  cfg.alpha = 0.7;
  cfg.epsilon_goal = 0.0;  // keeps every goal on the live gradient path
  cfg.clip_rewards = false;
  return cfg;
}

/// Central differences are only valid where the loss is smooth around the
/// evaluation point; a rectifier pre-activation within `margin` of zero can
/// put the +-h probes on different sides of the kink. Cases that pass near
/// one are resampled.
constexpr double kKinkMargin = 1e-3;

bool rollout_clear_of_kinks(FunAgent& agent, const RolloutSegment& segment) {
  for (const auto& cc : segment.caches) {
    Tensor pre_z = agent.percept.forward(cc.obs);
    for (double v : pre_z.data) {
      if (std::abs(v) < kKinkMargin) return false;
    }
    Tensor pre_s = agent.mspace.forward(cc.z);
    for (double v : pre_s.data) {
      if (std::abs(v) < kKinkMargin) return false;
    }
  }
  return true;
}

/// Collects one probe segment and returns the pieces an FD suite needs.
struct AgentProbe {
  FunAgent agent;
  RolloutSegment segment;
  SegmentSignals signals;
  ReplayRequest request;

  AgentProbe(const AgentConfig& cfg, const TrainConfig& tcfg,
             std::uint64_t seed, std::size_t steps)
      : agent(cfg, seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      std::uint64_t s = derive_seed(seed, 7000 + attempt);
      ProbeEnv env(cfg.obs_dim, cfg.num_actions, steps + 3, derive_seed(s, 7));
      Rng rng(derive_seed(s, 8));
      Tensor obs = env.reset_episode().features;
      agent.reset_episode();
      TrainConfig collect_cfg = tcfg;
      collect_cfg.bptt_len = steps;
      segment = collect_segment(agent, env, rng, obs, collect_cfg);
      if (rollout_clear_of_kinks(agent, segment)) break;
      if (attempt > 100) {
        throw std::runtime_error("gradcheck: no kink-free rollout found");
      }
    }
    signals = compute_segment_signals(segment, agent.config());
    request = make_replay_request(segment, signals, agent.config(), tcfg);
  }
};

GradCheckResult agent_path_check(const std::string& name, std::uint64_t seed,
                                 std::size_t cases, FunMode mode,
                                 unsigned loss_mask) {
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t n = 0; n < cases; ++n) {
    AgentConfig cfg = tiny_agent_config(5, 3);
    cfg.mode = mode;
    TrainConfig tcfg;
    tcfg.entropy_weight = 1e-2;
    AgentProbe probe(cfg, tcfg, derive_seed(seed, 100 + n), 6);

    ParamList params = probe.agent.params();
    zero_grads(params);
    accumulate_segment_gradients(probe.agent, probe.segment, probe.signals,
                                 tcfg, loss_mask);

    auto loss = [&]() {
      ReplayLosses l = probe.agent.replay_losses(probe.request);
      double total = 0.0;
      if (loss_mask & static_cast<unsigned>(LossMask::policy)) {
        total += l.policy;
      }
      if (loss_mask & static_cast<unsigned>(LossMask::entropy)) {
        total += l.entropy;
      }
      if (loss_mask & static_cast<unsigned>(LossMask::critics)) {
        total += l.critic;
      }
      if (loss_mask & static_cast<unsigned>(LossMask::alignment)) {
        total += l.alignment;
      }
      return total;
    };
    worst = std::max(worst, fd_check_params(params, loss));
    coords += param_count(params);
  }
  return make_result(name, worst, cases, coords);
}

}  // namespace

GradCheckResult gradcheck_linear(std::uint64_t seed, std::size_t cases) {
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t n = 0; n < cases; ++n) {
    Rng rng(derive_seed(seed, n));
    std::size_t in = 2 + rng.below(5);
    std::size_t out = 2 + rng.below(5);
    LinearLayer layer(in, out, rng.below(2) == 0);
    layer.init_uniform(rng);
    Tensor x = random_vec(rng, in);
    Tensor probe = random_vec(rng, out);

    layer.grad_weight.fill(0.0);
    if (layer.has_bias()) layer.grad_bias.fill(0.0);
    Tensor dx = layer.backward(x, probe);

    auto loss = [&]() { return dot(probe, layer.forward(x)); };
    ParamList params;
    layer.collect_params("linear", params);
    worst = std::max(worst, fd_check_params(params, loss));
    coords += param_count(params);

    // Input gradient against the same probe.
    for (std::size_t i = 0; i < in; ++i) {
      double saved = x.data[i];
      x.data[i] = saved + kFdStep;
      double up = loss();
      x.data[i] = saved - kFdStep;
      double down = loss();
      x.data[i] = saved;
      double fd = (up - down) / (2.0 * kFdStep);
      worst = std::max(worst, fd_relative_error(dx.data[i], fd));
      ++coords;
    }
  }
  return make_result("linear", worst, cases, coords);
}

GradCheckResult gradcheck_lstm(std::uint64_t seed, std::size_t cases) {
  double worst = 0.0;
  std::size_t coords = 0;
  const std::size_t unroll = 3;
  for (std::size_t n = 0; n < cases; ++n) {
    Rng rng(derive_seed(seed, n));
    std::size_t in = 2 + rng.below(3);
    std::size_t hidden = 2 + rng.below(3);
    LstmCell cell(in, hidden);
    cell.init_uniform(rng);
    std::vector<Tensor> xs;
    for (std::size_t t = 0; t < unroll; ++t) xs.push_back(random_vec(rng, in));
    Tensor probe_h = random_vec(rng, hidden);
    Tensor probe_c = random_vec(rng, hidden);

    auto loss = [&]() {
      LstmState st = cell.zero_state();
      for (const auto& x : xs) st = cell.forward(x, st, nullptr);
      return dot(probe_h, st.h) + dot(probe_c, st.c);
    };

    cell.grad_input_weights.fill(0.0);
    cell.grad_recurrent_weights.fill(0.0);
    cell.grad_gate_biases.fill(0.0);
    std::vector<LstmCache> caches(unroll);
    LstmState st = cell.zero_state();
    for (std::size_t t = 0; t < unroll; ++t) {
      st = cell.forward(xs[t], st, &caches[t]);
    }
    Tensor dh = probe_h, dc = probe_c;
    for (std::size_t t = unroll; t-- > 0;) {
      Tensor dx, dh_prev, dc_prev;
      cell.backward(caches[t], dh, dc, dx, dh_prev, dc_prev);
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
    }

    ParamList params;
    cell.collect_params("lstm", params);
    worst = std::max(worst, fd_check_params(params, loss));
    coords += param_count(params);
  }
  return make_result("lstm", worst, cases, coords);
}

GradCheckResult gradcheck_softmax_logprob(std::uint64_t seed,
                                          std::size_t cases) {
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t n = 0; n < cases; ++n) {
    Rng rng(derive_seed(seed, n));
    std::size_t dim = 2 + rng.below(6);
    Tensor logits = random_vec(rng, dim, -3.0, 3.0);
    Tensor probe = random_vec(rng, dim);

    Tensor lp = log_softmax(logits);
    Tensor dx = log_softmax_backward(lp, probe);
    auto loss = [&]() { return dot(probe, log_softmax(logits)); };
    for (std::size_t i = 0; i < dim; ++i) {
      double saved = logits.data[i];
      logits.data[i] = saved + kFdStep;
      double up = loss();
      logits.data[i] = saved - kFdStep;
      double down = loss();
      logits.data[i] = saved;
      double fd = (up - down) / (2.0 * kFdStep);
      worst = std::max(worst, fd_relative_error(dx.data[i], fd));
      ++coords;
    }
  }
  return make_result("softmax_logprob", worst, cases, coords);
}

GradCheckResult gradcheck_cosine(std::uint64_t seed, std::size_t cases) {
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t n = 0; n < cases; ++n) {
    Rng rng(derive_seed(seed, n));
    std::size_t dim = 2 + rng.below(6);
    Tensor a = random_vec(rng, dim);
    Tensor b = random_vec(rng, dim);
    double weight = rng.uniform(-2.0, 2.0);

    Tensor da = Tensor::zeros({dim}), db = Tensor::zeros({dim});
    cosine_similarity_backward(a, b, weight, &da, &db);
    auto loss = [&]() { return weight * cosine_similarity(a, b); };
    auto check_side = [&](Tensor& v, const Tensor& grad) {
      for (std::size_t i = 0; i < dim; ++i) {
        double saved = v.data[i];
        v.data[i] = saved + kFdStep;
        double up = loss();
        v.data[i] = saved - kFdStep;
        double down = loss();
        v.data[i] = saved;
        double fd = (up - down) / (2.0 * kFdStep);
        worst = std::max(worst, fd_relative_error(grad.data[i], fd));
        ++coords;
      }
    };
    check_side(a, da);
    check_side(b, db);
  }
  return make_result("cosine_similarity", worst, cases, coords);
}

GradCheckResult gradcheck_value_heads(std::uint64_t seed, std::size_t cases) {
  return agent_path_check("value_heads", seed, cases, FunMode::full_fun,
                          static_cast<unsigned>(LossMask::critics));
}

GradCheckResult gradcheck_manager_path(std::uint64_t seed, std::size_t cases) {
  return agent_path_check("manager_path", seed, cases, FunMode::full_fun,
                          static_cast<unsigned>(LossMask::alignment));
}

GradCheckResult gradcheck_worker_path(std::uint64_t seed, std::size_t cases) {
  return agent_path_check("worker_path", seed, cases, FunMode::full_fun,
                          static_cast<unsigned>(LossMask::policy) |
                              static_cast<unsigned>(LossMask::entropy));
}

GradCheckResult gradcheck_full_loss(std::uint64_t seed, std::size_t cases) {
  return agent_path_check("full_loss", seed, cases, FunMode::full_fun,
                          static_cast<unsigned>(LossMask::all));
}

GradCheckResult gradcheck_non_feudal(std::uint64_t seed, std::size_t cases) {
  return agent_path_check("non_feudal", seed, cases, FunMode::non_feudal,
                          static_cast<unsigned>(LossMask::all));
}

GradCheckResult gradcheck_baseline(std::uint64_t seed, std::size_t cases) {
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t n = 0; n < cases; ++n) {
    std::uint64_t case_seed = derive_seed(seed, 500 + n);
    BaselineConfig cfg;
    cfg.obs_dim = 5;
    cfg.num_actions = 3;
    cfg.percept_hidden = 4;
    cfg.hidden = 4;
    cfg.recurrent_kind = (n % 2 == 0) ? "lstm" : "dlstm";
    cfg.r = (n % 2 == 0) ? 1 : 2;
    cfg.clip_rewards = false;
    BaselineAgent agent(cfg, case_seed);

    BaselineRolloutSegment seg;
    for (std::uint64_t attempt = 0;; ++attempt) {
      std::uint64_t s = derive_seed(case_seed, 7000 + attempt);
      ProbeEnv env(cfg.obs_dim, cfg.num_actions, 8, derive_seed(s, 7));
      Rng rng(derive_seed(s, 8));
      Tensor obs = env.reset_episode().features;
      agent.reset_episode();
      seg = baseline_collect_segment(agent, env, rng, obs, 6);
      bool clear = true;
      for (const auto& cc : seg.caches) {
        Tensor pre = agent.percept.forward(cc.obs);
        for (double v : pre.data) {
          if (std::abs(v) < kKinkMargin) clear = false;
        }
      }
      if (clear) break;
      if (attempt > 100) {
        throw std::runtime_error("gradcheck: no kink-free rollout found");
      }
    }

    const std::size_t T = seg.steps.size();
    std::vector<double> rewards(T);
    std::vector<char> terminals(T);
    for (std::size_t t = 0; t < T; ++t) {
      rewards[t] = seg.steps[t].reward;
      terminals[t] = seg.steps[t].terminal ? 1 : 0;
    }
    auto returns =
        discounted_returns(rewards, terminals, cfg.gamma, seg.cut_value);

    const double beta = 1e-2;
    BaselineReplayRequest req;
    req.initial_state = seg.initial_state;
    req.entropy_weight = beta;
    std::vector<BaselineUpstream> ups(T);
    for (std::size_t t = 0; t < T; ++t) {
      const BaselineStepCache& cc = seg.caches[t];
      double adv = returns[t] - cc.value;
      std::size_t a = seg.steps[t].action;
      double entropy = 0.0;
      for (std::size_t j = 0; j < cfg.num_actions; ++j) {
        entropy -= cc.pi.data[j] * cc.log_pi.data[j];
      }
      ups[t].dlogits = Tensor::zeros({cfg.num_actions});
      for (std::size_t j = 0; j < cfg.num_actions; ++j) {
        ups[t].dlogits.data[j] =
            adv * (cc.pi.data[j] - (j == a ? 1.0 : 0.0)) +
            beta * cc.pi.data[j] * (cc.log_pi.data[j] + entropy);
      }
      ups[t].dvalue = cc.value - returns[t];
      req.steps.push_back({cc.obs, a, adv, returns[t]});
    }

    ParamList params = agent.params();
    zero_grads(params);
    agent.backward_segment(seg.caches, ups);
    auto loss = [&]() { return agent.replay_losses(req).total(); };
    worst = std::max(worst, fd_check_params(params, loss));
    coords += param_count(params);
  }
  return make_result("baseline", worst, cases, coords);
}

std::vector<GradCheckResult> run_all_gradchecks(std::uint64_t seed,
                                                std::size_t cases) {
  std::vector<GradCheckResult> results;
  results.push_back(gradcheck_linear(derive_seed(seed, 1), cases));
  results.push_back(gradcheck_lstm(derive_seed(seed, 2), cases));
  results.push_back(gradcheck_softmax_logprob(derive_seed(seed, 3), cases));
  results.push_back(gradcheck_cosine(derive_seed(seed, 4), cases));
  results.push_back(gradcheck_value_heads(derive_seed(seed, 5), cases));
  results.push_back(gradcheck_manager_path(derive_seed(seed, 6), cases));
  results.push_back(gradcheck_worker_path(derive_seed(seed, 7), cases));
  results.push_back(gradcheck_full_loss(derive_seed(seed, 8), cases / 2 + 1));
  results.push_back(gradcheck_non_feudal(derive_seed(seed, 9), cases / 2 + 1));
  results.push_back(gradcheck_baseline(derive_seed(seed, 10), cases / 2 + 1));

  // Equivalence of the alignment update with the directional-model
  // log-likelihood gradient, reported against its own tighter bound.
  double worst_dev = 0.0;
  std::size_t tpg_cases = std::max<std::size_t>(cases, 10);
  for (std::size_t n = 0; n < tpg_cases; ++n) {
    std::uint64_t s = derive_seed(seed, 1000 + n);
    AgentConfig cfg = tiny_agent_config(5, 3);
    FunAgent agent(cfg, s);
    Rng rng(derive_seed(s, 1));
    std::vector<Tensor> observations;
    std::vector<double> advantages;
    for (std::size_t t = 0; t < cfg.c + 4; ++t) {
      observations.push_back(random_vec(rng, cfg.obs_dim));
      advantages.push_back(rng.uniform(-2.0, 2.0));
    }
    TpgReport rep = transition_pg_equivalence_check(agent, observations,
                                                    advantages);
    worst_dev = std::max(worst_dev, rep.max_abs_deviation);
  }
  GradCheckResult tpg;
  tpg.name = "transition_pg_equivalence";
  tpg.worst_rel_err = worst_dev;
  tpg.cases = tpg_cases;
  tpg.coords = 0;
  tpg.pass = worst_dev < 1e-10;
  results.push_back(tpg);
  return results;
}

}  // namespace feudal
