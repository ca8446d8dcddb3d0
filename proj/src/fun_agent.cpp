#include "feudal/fun_agent.hpp"

#include <cmath>
#include <stdexcept>

namespace feudal {

namespace {

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// Relu backward using the forward output as the mask (out > 0 iff pre > 0).
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

FunAgent::FunAgent(const AgentConfig& config, std::uint64_t init_seed)
    : config_(config) {
  config_.normalize();
  config_.validate();

  const auto& c = config_;
  percept = LinearLayer(c.obs_dim, c.percept_hidden, true);
  mspace = LinearLayer(c.percept_hidden, c.d, true);
  manager_cell = LstmCell(c.d, c.manager_hidden);
  goal_head = LinearLayer(c.manager_hidden, c.d, true);
  phi = LinearLayer(c.d, c.k, false);  // bias-free: a zero goal sum gives w = 0
  worker_cell = LstmCell(c.percept_hidden, c.worker_hidden);
  u_head = LinearLayer(c.worker_hidden, c.num_actions * c.k, true);
  vm_head = LinearLayer(c.manager_hidden, 1, true);
  ve_head = LinearLayer(c.worker_hidden, 1, true);
  vi_head = LinearLayer(c.worker_hidden, 1, true);

  Rng init(derive_seed(init_seed, 0x1));
  percept.init_uniform(init);
  mspace.init_uniform(init);
  manager_cell.init_uniform(init);
  goal_head.init_uniform(init);
  phi.init_uniform(init);
  worker_cell.init_uniform(init);
  u_head.init_uniform(init);
  vm_head.init_uniform(init);
  ve_head.init_uniform(init);
  vi_head.init_uniform(init);

  state_.history = GoalHistory(c.c, c.d);
  reset_episode();
}

ParamList FunAgent::params() {
  ParamList out;
  percept.collect_params("percept", out);
  mspace.collect_params("mspace", out);
  manager_cell.collect_params("manager_cell", out);
  goal_head.collect_params("goal_head", out);
  phi.collect_params("phi", out);
  worker_cell.collect_params("worker_cell", out);
  u_head.collect_params("u_head", out);
  vm_head.collect_params("vm_head", out);
  ve_head.collect_params("ve_head", out);
  vi_head.collect_params("vi_head", out);
  return out;
}

std::size_t FunAgent::parameter_count() {
  return param_count(params());
}

void FunAgent::reset_episode() {
  state_.manager.cores.assign(config_.r, manager_cell.zero_state());
  state_.manager.output_ring.clear();
  state_.manager.step_counter = 0;
  state_.worker = worker_cell.zero_state();
  state_.history.reset();
  state_.prev_goal = Tensor::zeros({config_.d});
  state_.prev_goal.data[0] = 1.0;  // degenerate fallback at t = 0
}

Tensor FunAgent::percept_forward(const Tensor& obs) const {
  return relu(percept.forward(obs));
}

Tensor FunAgent::mspace_forward(const Tensor& z) const {
  return relu(mspace.forward(z));
}

Tensor FunAgent::embed_goal_window(const Tensor& goal_sum) const {
  return phi.forward(goal_sum);
}

FunAgent::GoalComputation FunAgent::manager_step(const Tensor& s,
                                                 DilatedLstmState& manager,
                                                 const Tensor& prev_goal,
                                                 Rng* rng,
                                                 const FunStepCache* forced,
                                                 LstmCache* cache) const {
  const std::size_t step = manager.step_counter;
  const std::size_t core = step % config_.r;

  LstmState next = manager_cell.forward(s, manager.cores[core], cache);
  manager.cores[core] = next;

  GoalComputation out;
  out.raw = goal_head.forward(next.h);

  manager.output_ring.push_back({step, out.raw});
  while (manager.output_ring.size() > config_.r) {
    manager.output_ring.pop_front();
  }

  out.pooled = Tensor::zeros({config_.d});
  for (const auto& e : manager.output_ring) {
    axpy(1.0, e.raw, out.pooled);
    out.ring_members.push_back(e.step);
  }
  scale(out.pooled, 1.0 / static_cast<double>(manager.output_ring.size()));
  out.pooled_norm = norm2(out.pooled);

  // Exploration draw happens on every live step so the stream layout does
  // not depend on network output.
  bool explore = false;
  if (rng && config_.epsilon_goal > 0.0) {
    explore = rng->uniform01() < config_.epsilon_goal;
  }

  if (forced) {
    out.source = forced->goal_source;
    if (out.source != GoalSource::network) {
      out.goal = forced->goal;  // recorded constant
      manager.step_counter = step + 1;
      return out;
    }
  } else if (explore) {
    double n = 0.0;
    Tensor g = Tensor::zeros({config_.d});
    do {
      for (double& v : g.data) v = rng->normal();
      n = norm2(g);
    } while (n < kCosineNormFloor);
    scale(g, 1.0 / n);
    out.goal = std::move(g);
    out.source = GoalSource::sampled;
    manager.step_counter = step + 1;
    return out;
  }

  if (config_.mode == FunMode::absolute_goals) {
    out.goal = out.pooled;
  } else if (out.pooled_norm < kCosineNormFloor) {
    out.goal = prev_goal;
    out.source = GoalSource::degenerate;
  } else {
    out.goal = out.pooled;
    scale(out.goal, 1.0 / out.pooled_norm);
  }
  manager.step_counter = step + 1;
  return out;
}

FunStepResult FunAgent::forward_step(const Tensor& obs, Rng* rng,
                                     const FunStepCache* forced,
                                     FunStepCache* cache) {
  if (obs.size() != config_.obs_dim) {
    throw std::invalid_argument("forward_step: observation size mismatch");
  }
  const std::size_t step = state_.manager.step_counter;

  Tensor z = percept_forward(obs);
  Tensor s = mspace_forward(z);

  LstmCache manager_cache;
  GoalComputation gc = manager_step(s, state_.manager, state_.prev_goal, rng,
                                    forced, &manager_cache);
  if (gc.source == GoalSource::degenerate) ++state_.degenerate_goals;
  state_.prev_goal = gc.goal;
  state_.history.push(step, gc.goal, s);

  Tensor window_sum =
      (forced && forced->goal_window_sum.size() == config_.d && freeze_window_)
          ? forced->goal_window_sum
          : state_.history.goal_sum();
  Tensor w = phi.forward(window_sum);

  LstmCache worker_cache;
  LstmState worker_next = worker_cell.forward(z, state_.worker, &worker_cache);
  state_.worker = worker_next;

  Tensor u_flat = u_head.forward(worker_next.h);
  Tensor U({config_.num_actions, config_.k}, u_flat.data);
  Tensor logits = Tensor::zeros({config_.num_actions});
  for (std::size_t a = 0; a < config_.num_actions; ++a) {
    double acc = 0.0;
    for (std::size_t j = 0; j < config_.k; ++j) {
      acc += U.at(a, j) * w.data[j];
    }
    logits.data[a] = acc;
  }
  Tensor log_pi = log_softmax(logits);
  Tensor pi = Tensor::zeros({config_.num_actions});
  for (std::size_t a = 0; a < config_.num_actions; ++a) {
    pi.data[a] = std::exp(log_pi.data[a]);
  }

  const Tensor& h_m = state_.manager.cores[step % config_.r].h;
  double v_m = vm_head.forward(h_m).data[0];
  double v_e = ve_head.forward(worker_next.h).data[0];
  double v_i = vi_head.forward(worker_next.h).data[0];

  if (cache) {
    cache->episode_step = step;
    cache->obs = obs;
    cache->z = std::move(z);
    cache->s = s;
    cache->core_index = step % config_.r;
    cache->manager_cache = std::move(manager_cache);
    cache->h_manager = h_m;
    cache->goal_raw = std::move(gc.raw);
    cache->ring_members = std::move(gc.ring_members);
    cache->pooled = std::move(gc.pooled);
    cache->pooled_norm = gc.pooled_norm;
    cache->goal = gc.goal;
    cache->goal_source = gc.source;
    cache->window_members = state_.history.member_steps();
    cache->goal_window_sum = window_sum;
    cache->w = w;
    cache->worker_cache = std::move(worker_cache);
    cache->h_worker = worker_next.h;
    cache->action_embed = U;
    cache->logits = std::move(logits);
    cache->log_pi = log_pi;
    cache->pi = pi;
    cache->v_manager = v_m;
    cache->v_extrinsic = v_e;
    cache->v_intrinsic = v_i;
  }

  FunStepResult result;
  result.pi = std::move(pi);
  result.log_pi = std::move(log_pi);
  result.goal = std::move(gc.goal);
  result.latent = std::move(s);
  result.v_manager = v_m;
  result.v_extrinsic = v_e;
  result.v_intrinsic = v_i;
  result.goal_source = gc.source;
  return result;
}

BootstrapEval FunAgent::eval_bootstrap(const Tensor& obs) const {
  Tensor z = percept_forward(obs);
  Tensor s = mspace_forward(z);

  const std::size_t core = state_.manager.step_counter % config_.r;
  LstmState m_next = manager_cell.forward(s, state_.manager.cores[core], nullptr);
  LstmState w_next = worker_cell.forward(z, state_.worker, nullptr);

  BootstrapEval out;
  out.v_manager = vm_head.forward(m_next.h).data[0];
  out.v_extrinsic = ve_head.forward(w_next.h).data[0];
  out.v_intrinsic = vi_head.forward(w_next.h).data[0];
  out.latent = std::move(s);
  return out;
}

void FunAgent::backward_segment(const std::vector<FunStepCache>& caches,
                                const std::vector<StepUpstream>& upstream,
                                bool attach_goals_to_worker,
                                bool vm_critic_to_trunk) {
  const std::size_t T = caches.size();
  if (upstream.size() != T) {
    throw std::invalid_argument("backward_segment: upstream/cache mismatch");
  }
  if (T == 0) return;
  const std::size_t start = caches[0].episode_step;
  const std::size_t H_m = config_.manager_hidden;
  const std::size_t H_w = config_.worker_hidden;

  std::vector<Tensor> dgoal(T), dghat(T), du_flat(T), ds(T);
  for (std::size_t t = 0; t < T; ++t) {
    dgoal[t] = Tensor::zeros({config_.d});
    dghat[t] = Tensor::zeros({config_.d});
    ds[t] = Tensor::zeros({config_.d});
  }

  // Logit-level backward: action-embedding product, then the goal embedding.
  // Window scatter may touch earlier steps, so this runs before the
  // Manager-side passes.
  for (std::size_t t = 0; t < T; ++t) {
    const FunStepCache& cc = caches[t];
    const Tensor& dlogits = upstream[t].dlogits;
    du_flat[t] = Tensor::zeros({config_.num_actions * config_.k});
    if (dlogits.size() == config_.num_actions && nonzero(dlogits)) {
      Tensor dw = Tensor::zeros({config_.k});
      for (std::size_t a = 0; a < config_.num_actions; ++a) {
        double dl = dlogits.data[a];
        for (std::size_t j = 0; j < config_.k; ++j) {
          du_flat[t].data[a * config_.k + j] += dl * cc.w.data[j];
          dw.data[j] += dl * cc.action_embed.at(a, j);
        }
      }
      Tensor dsum = phi.backward(cc.goal_window_sum, dw);
      if (attach_goals_to_worker) {
        for (std::size_t u : cc.window_members) {
          if (u < start) continue;  // carried constants from before the cut
          std::size_t rel = u - start;
          if (caches[rel].goal_source == GoalSource::network) {
            axpy(1.0, dsum, dgoal[rel]);
          }
        }
      }
    }
    if (upstream[t].dgoal.size() == config_.d &&
        cc.goal_source == GoalSource::network) {
      axpy(1.0, upstream[t].dgoal, dgoal[t]);
    }
  }

  // Goal-level backward: undo normalization and spread over the pooling ring.
  for (std::size_t t = 0; t < T; ++t) {
    const FunStepCache& cc = caches[t];
    if (cc.goal_source != GoalSource::network || !nonzero(dgoal[t])) continue;
    Tensor dpooled;
    if (config_.mode == FunMode::absolute_goals) {
      dpooled = dgoal[t];
    } else {
      // g = p / |p|: J^T v = (v - (v.g) g) / |p|
      double vg = dot(dgoal[t], cc.goal);
      dpooled = dgoal[t];
      axpy(-vg, cc.goal, dpooled);
      scale(dpooled, 1.0 / cc.pooled_norm);
    }
    double inv_m = 1.0 / static_cast<double>(cc.ring_members.size());
    for (std::size_t u : cc.ring_members) {
      if (u < start) continue;
      axpy(inv_m, dpooled, dghat[u - start]);
    }
  }

  // Manager BPTT over the dilated cores, newest step first. Each core's
  // recurrent gradient hops r steps at a time.
  std::vector<LstmState> pending_m(config_.r,
                                   LstmState{Tensor::zeros({H_m}),
                                             Tensor::zeros({H_m})});
  for (std::size_t ti = T; ti-- > 0;) {
    const FunStepCache& cc = caches[ti];
    const std::size_t core = cc.core_index;
    Tensor dh = std::move(pending_m[core].h);
    Tensor dc = std::move(pending_m[core].c);
    if (nonzero(dghat[ti])) {
      Tensor dh_goal = goal_head.backward(cc.h_manager, dghat[ti]);
      axpy(1.0, dh_goal, dh);
    }
    if (upstream[ti].dv_manager != 0.0) {
      Tensor dv = Tensor::vec({upstream[ti].dv_manager});
      Tensor dh_v = vm_head.backward(cc.h_manager, dv);
      if (vm_critic_to_trunk) axpy(1.0, dh_v, dh);
    }
    Tensor dh_prev, dc_prev;
    manager_cell.backward(cc.manager_cache, dh, dc, ds[ti], dh_prev, dc_prev);
    pending_m[core].h = std::move(dh_prev);
    pending_m[core].c = std::move(dc_prev);
  }

  // Worker BPTT plus the shared trunk.
  Tensor pending_h = Tensor::zeros({H_w});
  Tensor pending_c = Tensor::zeros({H_w});
  for (std::size_t ti = T; ti-- > 0;) {
    const FunStepCache& cc = caches[ti];
    Tensor dh = std::move(pending_h);
    if (nonzero(du_flat[ti])) {
      Tensor dh_u = u_head.backward(cc.h_worker, du_flat[ti]);
      axpy(1.0, dh_u, dh);
    }
    if (upstream[ti].dv_extrinsic != 0.0) {
      Tensor dv = Tensor::vec({upstream[ti].dv_extrinsic});
      axpy(1.0, ve_head.backward(cc.h_worker, dv), dh);
    }
    if (upstream[ti].dv_intrinsic != 0.0) {
      Tensor dv = Tensor::vec({upstream[ti].dv_intrinsic});
      axpy(1.0, vi_head.backward(cc.h_worker, dv), dh);
    }
    Tensor dz, dh_prev, dc_prev;
    worker_cell.backward(cc.worker_cache, dh, pending_c, dz, dh_prev, dc_prev);
    pending_h = std::move(dh_prev);
    pending_c = std::move(dc_prev);

    if (nonzero(ds[ti])) {
      Tensor ds_masked = relu_mask(cc.s, ds[ti]);
      Tensor dz_m = mspace.backward(cc.z, ds_masked);
      axpy(1.0, dz_m, dz);
    }
    Tensor dz_masked = relu_mask(cc.z, dz);
    percept.backward(cc.obs, dz_masked);
  }
}

ReplayLosses FunAgent::replay_losses(const ReplayRequest& request) {
  FunRuntimeState saved = snapshot_runtime();
  restore_runtime(request.initial_state);
  freeze_window_ = request.freeze_goal_window;

  ReplayLosses losses;
  for (const auto& rs : request.steps) {
    FunStepCache forced;
    forced.goal_source = rs.goal_source;
    forced.goal = rs.recorded_goal;
    forced.goal_window_sum = rs.frozen_goal_window_sum;
    FunStepResult res = forward_step(rs.obs, nullptr, &forced, nullptr);

    losses.policy += -rs.advantage * res.log_pi.data[rs.action];
    double entropy = 0.0;
    for (std::size_t a = 0; a < res.pi.size(); ++a) {
      entropy -= res.pi.data[a] * res.log_pi.data[a];
    }
    losses.entropy += -request.entropy_weight * entropy;

    if (request.train_vm) {
      double vm = request.vm_critic_to_trunk
                      ? res.v_manager
                      : vm_head.forward(rs.frozen_h_manager).data[0];
      double dm = vm - rs.return_manager;
      losses.critic += 0.5 * dm * dm;
    }
    double de = res.v_extrinsic - rs.return_extrinsic;
    losses.critic += 0.5 * de * de;
    if (request.train_vi) {
      double di = res.v_intrinsic - rs.return_intrinsic;
      losses.critic += 0.5 * di * di;
    }

    if (rs.manager_update) {
      losses.alignment +=
          -rs.manager_advantage * cosine_similarity(rs.frozen_delta_s, res.goal);
    }
  }

  freeze_window_ = false;
  restore_runtime(std::move(saved));
  return losses;
}

std::size_t act(const Tensor& pi, Rng& rng) {
  double sum = 0.0;
  for (double p : pi.data) sum += p;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("act: policy not normalized");
  }
  return rng.categorical(pi.data);
}

}  // namespace feudal
