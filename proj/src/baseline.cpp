#include "feudal/baseline.hpp"

#include <cmath>
#include <stdexcept>

namespace feudal {

namespace {

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_mask(const Tensor& out, const Tensor& upstream) {
  Tensor d = upstream;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (out.data[i] <= 0.0) d.data[i] = 0.0;
  }
  return d;
}

bool nonzero(const Tensor& t) {
  for (double v : t.data) {
    if (v != 0.0) return true;
  }
  return false;
}

}  // namespace

void BaselineConfig::normalize() {
  if (recurrent_kind == "lstm") r = 1;
}

void BaselineConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("BaselineConfig: ") + msg);
  };
  require(obs_dim > 0, "obs_dim must be positive");
  require(num_actions > 1, "need at least two actions");
  require(percept_hidden > 0 && hidden > 0, "hidden sizes must be positive");
  require(recurrent_kind == "lstm" || recurrent_kind == "dlstm",
          "recurrent_kind must be lstm or dlstm");
  require(recurrent_kind == "dlstm" || r == 1, "lstm kind forces r == 1");
  require(r >= 1, "r must be >= 1");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma in [0,1]");
}

BaselineAgent::BaselineAgent(const BaselineConfig& config,
                             std::uint64_t init_seed)
    : config_(config) {
  config_.normalize();
  config_.validate();

  percept = LinearLayer(config_.obs_dim, config_.percept_hidden, true);
  core = LstmCell(config_.percept_hidden + config_.num_actions, config_.hidden);
  policy_head = LinearLayer(config_.hidden, config_.num_actions, true);
  value_head = LinearLayer(config_.hidden, 1, true);

  Rng init(derive_seed(init_seed, 0x2));
  percept.init_uniform(init);
  core.init_uniform(init);
  policy_head.init_uniform(init);
  value_head.init_uniform(init);

  reset_episode();
}

ParamList BaselineAgent::params() {
  ParamList out;
  percept.collect_params("percept", out);
  core.collect_params("core", out);
  policy_head.collect_params("policy_head", out);
  value_head.collect_params("value_head", out);
  return out;
}

std::size_t BaselineAgent::parameter_count() { return param_count(params()); }

void BaselineAgent::reset_episode() {
  state_.cores.assign(config_.r, core.zero_state());
  state_.output_ring.clear();
  state_.step_counter = 0;
  state_.prev_action = SIZE_MAX;
}

Tensor BaselineAgent::make_core_input(const Tensor& z,
                                      std::size_t prev_action) const {
  Tensor in = Tensor::zeros({config_.percept_hidden + config_.num_actions});
  for (std::size_t i = 0; i < z.size(); ++i) in.data[i] = z.data[i];
  if (prev_action != SIZE_MAX) {
    in.data[config_.percept_hidden + prev_action] = 1.0;
  }
  return in;
}

BaselineStepResult BaselineAgent::forward_step(const Tensor& obs,
                                               BaselineStepCache* cache) {
  if (obs.size() != config_.obs_dim) {
    throw std::invalid_argument("baseline_forward: observation size mismatch");
  }
  const std::size_t step = state_.step_counter;
  const std::size_t core_idx = step % config_.r;

  Tensor z = relu(percept.forward(obs));
  Tensor in = make_core_input(z, state_.prev_action);

  LstmCache lstm_cache;
  LstmState next = core.forward(in, state_.cores[core_idx], &lstm_cache);
  state_.cores[core_idx] = next;

  state_.output_ring.push_back({step, next.h});
  while (state_.output_ring.size() > config_.r) state_.output_ring.pop_front();

  Tensor pooled = Tensor::zeros({config_.hidden});
  std::vector<std::size_t> ring_members;
  for (const auto& e : state_.output_ring) {
    axpy(1.0, e.h, pooled);
    ring_members.push_back(e.step);
  }
  scale(pooled, 1.0 / static_cast<double>(state_.output_ring.size()));

  Tensor logits = policy_head.forward(pooled);
  Tensor log_pi = log_softmax(logits);
  Tensor pi = Tensor::zeros(log_pi.shape);
  for (std::size_t i = 0; i < pi.size(); ++i) {
    pi.data[i] = std::exp(log_pi.data[i]);
  }
  double value = value_head.forward(pooled).data[0];

  state_.step_counter = step + 1;

  if (cache) {
    cache->episode_step = step;
    cache->obs = obs;
    cache->core_input = std::move(in);
    cache->z = std::move(z);
    cache->core_index = core_idx;
    cache->lstm_cache = std::move(lstm_cache);
    cache->h = next.h;
    cache->ring_members = std::move(ring_members);
    cache->pooled = std::move(pooled);
    cache->logits = std::move(logits);
    cache->log_pi = log_pi;
    cache->pi = pi;
    cache->value = value;
  }

  BaselineStepResult res;
  res.pi = std::move(pi);
  res.log_pi = std::move(log_pi);
  res.value = value;
  return res;
}

double BaselineAgent::eval_bootstrap(const Tensor& obs) const {
  Tensor z = relu(percept.forward(obs));
  Tensor in = make_core_input(z, state_.prev_action);
  const std::size_t core_idx = state_.step_counter % config_.r;
  LstmState next = core.forward(in, state_.cores[core_idx], nullptr);

  Tensor pooled = next.h;
  if (config_.r > 1) {
    pooled = Tensor::zeros({config_.hidden});
    axpy(1.0, next.h, pooled);
    std::size_t count = 1;
    for (auto it = state_.output_ring.rbegin();
         it != state_.output_ring.rend() && count < config_.r; ++it) {
      axpy(1.0, it->h, pooled);
      ++count;
    }
    scale(pooled, 1.0 / static_cast<double>(count));
  }
  return value_head.forward(pooled).data[0];
}

void BaselineAgent::backward_segment(
    const std::vector<BaselineStepCache>& caches,
    const std::vector<BaselineUpstream>& upstream) {
  const std::size_t T = caches.size();
  if (upstream.size() != T) {
    throw std::invalid_argument("baseline backward: upstream/cache mismatch");
  }
  if (T == 0) return;
  const std::size_t start = caches[0].episode_step;
  const std::size_t H = config_.hidden;

  // Head backward first; pooling spreads each step's gradient over the ring.
  std::vector<Tensor> dh(T, Tensor::zeros({H}));
  for (std::size_t t = 0; t < T; ++t) {
    const BaselineStepCache& cc = caches[t];
    Tensor dpooled = Tensor::zeros({H});
    if (upstream[t].dlogits.size() == config_.num_actions &&
        nonzero(upstream[t].dlogits)) {
      axpy(1.0, policy_head.backward(cc.pooled, upstream[t].dlogits), dpooled);
    }
    if (upstream[t].dvalue != 0.0) {
      Tensor dv = Tensor::vec({upstream[t].dvalue});
      axpy(1.0, value_head.backward(cc.pooled, dv), dpooled);
    }
    if (!nonzero(dpooled)) continue;
    double inv_m = 1.0 / static_cast<double>(cc.ring_members.size());
    for (std::size_t u : cc.ring_members) {
      if (u < start) continue;
      axpy(inv_m, dpooled, dh[u - start]);
    }
  }

  std::vector<LstmState> pending(config_.r,
                                 LstmState{Tensor::zeros({H}),
                                           Tensor::zeros({H})});
  for (std::size_t ti = T; ti-- > 0;) {
    const BaselineStepCache& cc = caches[ti];
    const std::size_t core_idx = cc.core_index;
    Tensor dht = std::move(pending[core_idx].h);
    axpy(1.0, dh[ti], dht);
    Tensor din, dh_prev, dc_prev;
    core.backward(cc.lstm_cache, dht, pending[core_idx].c, din, dh_prev,
                  dc_prev);
    pending[core_idx].h = std::move(dh_prev);
    pending[core_idx].c = std::move(dc_prev);

    Tensor dz = Tensor::zeros({config_.percept_hidden});
    for (std::size_t i = 0; i < config_.percept_hidden; ++i) {
      dz.data[i] = din.data[i];  // the action one-hot part is an input
    }
    Tensor dz_masked = relu_mask(cc.z, dz);
    percept.backward(cc.obs, dz_masked);
  }
}

BaselineReplayLosses BaselineAgent::replay_losses(
    const BaselineReplayRequest& request) {
  BaselineRuntimeState saved = snapshot_runtime();
  restore_runtime(request.initial_state);

  BaselineReplayLosses losses;
  for (const auto& rs : request.steps) {
    BaselineStepResult res = forward_step(rs.obs, nullptr);
    losses.policy += -rs.advantage * res.log_pi.data[rs.action];
    double entropy = 0.0;
    for (std::size_t a = 0; a < res.pi.size(); ++a) {
      entropy -= res.pi.data[a] * res.log_pi.data[a];
    }
    losses.entropy += -request.entropy_weight * entropy;
    double dv = res.value - rs.value_target;
    losses.critic += 0.5 * dv * dv;
    note_action(rs.action);
  }

  restore_runtime(std::move(saved));
  return losses;
}

std::size_t baseline_parameter_count(const BaselineConfig& config) {
  BaselineConfig c = config;
  c.normalize();
  const std::size_t P = c.percept_hidden;
  const std::size_t H = c.hidden;
  const std::size_t A = c.num_actions;
  std::size_t count = 0;
  count += P * c.obs_dim + P;             // percept
  count += 4 * H * (P + A) + 4 * H * H + 4 * H;  // core
  count += A * H + A;                     // policy head
  count += H + 1;                         // value head
  return count;
}

std::size_t matched_baseline_hidden(const BaselineConfig& base,
                                    std::size_t target_params) {
  BaselineConfig probe = base;
  std::size_t best_h = 1;
  std::size_t best_diff = SIZE_MAX;
  for (std::size_t h = 1; h <= 4096; ++h) {
    probe.hidden = h;
    std::size_t n = baseline_parameter_count(probe);
    std::size_t diff = n > target_params ? n - target_params : target_params - n;
    if (diff < best_diff) {
      best_diff = diff;
      best_h = h;
    }
    if (n > 2 * target_params) break;
  }
  return best_h;
}

}  // namespace feudal
