#include "feudal/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace feudal {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + msg);
  };
  require(bptt_len >= 1, "bptt_len must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(entropy_weight >= 0.0, "entropy_weight must be >= 0");
  require(rmsprop_decay > 0.0 && rmsprop_decay < 1.0, "rmsprop_decay in (0,1)");
  require(rmsprop_epsilon > 0.0, "rmsprop_epsilon must be positive");
  require(total_steps >= 1, "total_steps must be >= 1");
  require(eval_interval >= 1, "eval_interval must be >= 1");
}

double TrainConfig::lr_at(std::size_t step) const {
  if (!anneal_lr) return learning_rate;
  double frac = std::min(1.0, static_cast<double>(step) /
                                  static_cast<double>(total_steps));
  return learning_rate * (1.0 - 0.5 * frac);
}

std::vector<double> discounted_returns(const std::vector<double>& rewards,
                                       const std::vector<char>& terminals,
                                       double gamma, double bootstrap) {
  if (rewards.size() != terminals.size()) {
    throw std::invalid_argument("discounted_returns: length mismatch");
  }
  std::vector<double> out(rewards.size());
  double future = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    if (terminals[t]) future = 0.0;
    future = rewards[t] + gamma * future;
    out[t] = future;
  }
  return out;
}

std::vector<double> intrinsic_reward_terms(const GoalHistory& history,
                                           std::size_t t, std::size_t c,
                                           bool absolute_goals) {
  if (history.size() == 0 || history.back().step != t) {
    throw std::logic_error("intrinsic_reward: history head is not step t");
  }
  const Tensor& s_t = history.back().latent;
  std::size_t lookback = std::min(c, t);
  std::vector<double> terms;
  terms.reserve(lookback);
  for (std::size_t i = 1; i <= lookback; ++i) {
    const auto& e = history.entry(history.size() - 1 - i);
    if (absolute_goals) {
      terms.push_back(cosine_similarity(s_t, e.goal));
    } else {
      Tensor diff = s_t;
      axpy(-1.0, e.latent, diff);
      terms.push_back(cosine_similarity(diff, e.goal));
    }
  }
  return terms;
}

double intrinsic_reward(const GoalHistory& history, std::size_t t,
                        std::size_t c, bool absolute_goals) {
  double sum = 0.0;
  for (double v : intrinsic_reward_terms(history, t, c, absolute_goals)) {
    sum += v;
  }
  return sum / static_cast<double>(c);
}

SegmentSignals compute_segment_signals(const RolloutSegment& segment,
                                       const AgentConfig& acfg) {
  const std::size_t T = segment.steps.size();
  SegmentSignals sig;
  sig.train_vm = acfg.mode != FunMode::non_feudal;
  sig.train_vi = acfg.mode != FunMode::non_feudal && acfg.alpha > 0.0;

  std::vector<double> extrinsic(T), intrinsic(T);
  std::vector<char> terminals(T);
  for (std::size_t t = 0; t < T; ++t) {
    extrinsic[t] = segment.steps[t].reward;
    // r^I[t] pays the step-t action for the alignment achieved on arrival at
    // state t+1; the cut evaluation supplies the final entry.
    intrinsic[t] = (t + 1 < T) ? segment.steps[t + 1].intrinsic
                               : segment.cut_intrinsic;
    terminals[t] = segment.steps[t].terminal ? 1 : 0;
  }

  sig.returns_extrinsic = discounted_returns(extrinsic, terminals,
                                             acfg.gamma_worker,
                                             segment.cut.v_extrinsic);
  sig.returns_manager = discounted_returns(extrinsic, terminals,
                                           acfg.gamma_manager,
                                           segment.cut.v_manager);
  sig.returns_intrinsic = discounted_returns(intrinsic, terminals,
                                             acfg.gamma_worker,
                                             segment.cut.v_intrinsic);

  const double alpha = sig.train_vi ? acfg.alpha : 0.0;
  sig.adv_worker.resize(T);
  sig.adv_manager.assign(T, 0.0);
  sig.manager_update.assign(T, 0);
  sig.alignment_target.resize(T);
  sig.alignment_dcos.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const FunStepCache& cc = segment.caches[t];
    sig.adv_worker[t] = (sig.returns_extrinsic[t] - cc.v_extrinsic) +
                        alpha * (sig.returns_intrinsic[t] - cc.v_intrinsic);
  }

  if (acfg.mode == FunMode::non_feudal) return sig;

  for (std::size_t t = 0; t < T; ++t) {
    const FunStepCache& cc = segment.caches[t];
    if (t + acfg.c > T) {
      // s_{t+c} is past the cut (or past the episode end); no shorter-horizon
      // substitute is used.
      ++sig.skipped_manager;
      continue;
    }
    if (cc.goal_source != GoalSource::network) {
      ++sig.excluded_goal_steps;
      continue;
    }
    const Tensor& s_ahead = (t + acfg.c < T) ? segment.caches[t + acfg.c].s
                                             : segment.cut.latent;
    Tensor target = s_ahead;
    if (acfg.mode != FunMode::absolute_goals) {
      axpy(-1.0, cc.s, target);  // directional goals align with s_{t+c} - s_t
    }
    sig.manager_update[t] = 1;
    sig.adv_manager[t] = sig.returns_manager[t] - cc.v_manager;
    sig.alignment_dcos[t] = cosine_similarity(target, cc.goal);
    sig.alignment_target[t] = std::move(target);
  }
  return sig;
}

std::vector<StepUpstream> build_upstreams(const RolloutSegment& segment,
                                          const SegmentSignals& signals,
                                          const AgentConfig& acfg,
                                          double entropy_weight,
                                          unsigned loss_mask) {
  const std::size_t T = segment.steps.size();
  std::vector<StepUpstream> ups(T);
  for (std::size_t t = 0; t < T; ++t) {
    const FunStepCache& cc = segment.caches[t];
    StepUpstream& up = ups[t];
    up.dlogits = Tensor::zeros({acfg.num_actions});

    if (loss_mask & static_cast<unsigned>(LossMask::policy)) {
      const double adv = signals.adv_worker[t];
      const std::size_t a = segment.steps[t].action;
      for (std::size_t j = 0; j < acfg.num_actions; ++j) {
        up.dlogits.data[j] += adv * (cc.pi.data[j] - (j == a ? 1.0 : 0.0));
      }
    }
    if ((loss_mask & static_cast<unsigned>(LossMask::entropy)) &&
        entropy_weight > 0.0) {
      double entropy = 0.0;
      for (std::size_t j = 0; j < acfg.num_actions; ++j) {
        entropy -= cc.pi.data[j] * cc.log_pi.data[j];
      }
      for (std::size_t j = 0; j < acfg.num_actions; ++j) {
        up.dlogits.data[j] +=
            entropy_weight * cc.pi.data[j] * (cc.log_pi.data[j] + entropy);
      }
    }
    if (loss_mask & static_cast<unsigned>(LossMask::critics)) {
      if (signals.train_vm) {
        up.dv_manager = cc.v_manager - signals.returns_manager[t];
      }
      up.dv_extrinsic = cc.v_extrinsic - signals.returns_extrinsic[t];
      if (signals.train_vi) {
        up.dv_intrinsic = cc.v_intrinsic - signals.returns_intrinsic[t];
      }
    }
    if ((loss_mask & static_cast<unsigned>(LossMask::alignment)) &&
        signals.manager_update[t]) {
      up.dgoal = Tensor::zeros({acfg.d});
      cosine_similarity_backward(signals.alignment_target[t], cc.goal,
                                 -signals.adv_manager[t], nullptr, &up.dgoal);
    }
  }
  return ups;
}

void accumulate_segment_gradients(FunAgent& agent,
                                  const RolloutSegment& segment,
                                  const SegmentSignals& signals,
                                  const TrainConfig& tcfg,
                                  unsigned loss_mask) {
  const AgentConfig& acfg = agent.config();
  auto ups = build_upstreams(segment, signals, acfg, tcfg.entropy_weight,
                             loss_mask);
  agent.backward_segment(segment.caches, ups,
                         acfg.mode == FunMode::non_feudal,
                         tcfg.manager_critic_to_trunk);
}

ReplayRequest make_replay_request(const RolloutSegment& segment,
                                  const SegmentSignals& signals,
                                  const AgentConfig& acfg,
                                  const TrainConfig& tcfg) {
  ReplayRequest req;
  req.initial_state = segment.initial_state;
  req.entropy_weight = tcfg.entropy_weight;
  req.train_vm = signals.train_vm;
  req.train_vi = signals.train_vi;
  req.vm_critic_to_trunk = tcfg.manager_critic_to_trunk;
  req.freeze_goal_window = acfg.mode != FunMode::non_feudal;

  const std::size_t T = segment.steps.size();
  req.steps.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const FunStepCache& cc = segment.caches[t];
    ReplayStep& rs = req.steps[t];
    rs.obs = cc.obs;
    rs.action = segment.steps[t].action;
    rs.goal_source = cc.goal_source;
    rs.recorded_goal = cc.goal;
    rs.advantage = signals.adv_worker[t];
    rs.return_manager = signals.returns_manager[t];
    rs.return_extrinsic = signals.returns_extrinsic[t];
    rs.return_intrinsic = signals.returns_intrinsic[t];
    rs.manager_update = signals.manager_update[t] != 0;
    if (rs.manager_update) {
      rs.manager_advantage = signals.adv_manager[t];
      rs.frozen_delta_s = signals.alignment_target[t];
    }
    rs.frozen_h_manager = cc.h_manager;
    rs.frozen_goal_window_sum = cc.goal_window_sum;
  }
  return req;
}

namespace {

double cut_intrinsic_value(const FunAgent& agent, const Tensor& cut_latent) {
  const AgentConfig& acfg = agent.config();
  GoalHistory history = agent.runtime().history;  // value copy
  std::size_t cut_step = agent.runtime().manager.step_counter;
  history.push(cut_step, Tensor::zeros({acfg.d}), cut_latent);
  return intrinsic_reward(history, cut_step, acfg.c,
                          acfg.mode == FunMode::absolute_goals);
}

RolloutSegment collect_impl(FunAgent& agent, Environment& env, Rng* rng,
                            const std::vector<std::size_t>* forced_actions,
                            Tensor& obs, std::size_t max_steps) {
  const AgentConfig& acfg = agent.config();
  RolloutSegment seg;
  seg.initial_state = agent.snapshot_runtime();
  seg.caches.reserve(max_steps);
  seg.steps.reserve(max_steps);

  for (std::size_t k = 0; k < max_steps; ++k) {
    FunStepCache cache;
    FunStepResult res = agent.forward_step(obs, rng, nullptr, &cache);
    double r_intr = intrinsic_reward(agent.runtime().history,
                                     cache.episode_step, acfg.c,
                                     acfg.mode == FunMode::absolute_goals);

    std::size_t action = forced_actions ? (*forced_actions)[k]
                                        : act(res.pi, *rng);
    EnvStep es = env.step(action);

    StepData sd;
    sd.action = action;
    sd.reward_raw = es.reward;
    sd.reward = acfg.clip_rewards ? std::clamp(es.reward, -1.0, 1.0)
                                  : es.reward;
    sd.intrinsic = r_intr;
    sd.terminal = es.terminal;
    sd.trial_boundary = es.trial_boundary;

    seg.caches.push_back(std::move(cache));
    seg.steps.push_back(sd);
    obs = std::move(es.observation.features);
    if (es.terminal) {
      seg.ended_terminal = true;
      break;
    }
  }

  seg.cut = agent.eval_bootstrap(obs);
  seg.cut_intrinsic = cut_intrinsic_value(agent, seg.cut.latent);
  return seg;
}

}  // namespace

RolloutSegment collect_segment(FunAgent& agent, Environment& env, Rng& rng,
                               Tensor& obs, const TrainConfig& tcfg) {
  return collect_impl(agent, env, &rng, nullptr, obs, tcfg.bptt_len);
}

RolloutSegment collect_segment_forced(FunAgent& agent, Environment& env,
                                      const std::vector<std::size_t>& actions,
                                      Tensor& obs) {
  return collect_impl(agent, env, nullptr, &actions, obs, actions.size());
}

SegmentMetrics train_segment(FunAgent& agent, Environment& env, Rng& rng,
                             Tensor& obs, double& episode_return_acc,
                             RmsProp& opt, const TrainConfig& tcfg,
                             std::size_t steps_done) {
  const AgentConfig& acfg = agent.config();
  RolloutSegment seg = collect_segment(agent, env, rng, obs, tcfg);
  SegmentSignals sig = compute_segment_signals(seg, acfg);

  ParamList params = agent.params();
  zero_grads(params);
  accumulate_segment_gradients(agent, seg, sig, tcfg);
  opt.step(params, tcfg.lr_at(steps_done));

  SegmentMetrics m;
  m.steps = seg.steps.size();
  m.skipped_manager = sig.skipped_manager;
  for (std::size_t t = 0; t < seg.steps.size(); ++t) {
    const FunStepCache& cc = seg.caches[t];
    episode_return_acc += seg.steps[t].reward_raw;
    m.intrinsic_sum += seg.steps[t].intrinsic;
    double entropy = 0.0;
    for (std::size_t j = 0; j < acfg.num_actions; ++j) {
      entropy -= cc.pi.data[j] * cc.log_pi.data[j];
    }
    m.entropy_sum += entropy;
    double dm = cc.v_manager - sig.returns_manager[t];
    double de = cc.v_extrinsic - sig.returns_extrinsic[t];
    double di = cc.v_intrinsic - sig.returns_intrinsic[t];
    if (sig.train_vm) m.vloss_m_sum += 0.5 * dm * dm;
    m.vloss_e_sum += 0.5 * de * de;
    if (sig.train_vi) m.vloss_i_sum += 0.5 * di * di;
  }

  if (seg.ended_terminal) {
    m.episodes_finished = 1;
    m.episode_return_sum = episode_return_acc;
    episode_return_acc = 0.0;
    agent.reset_episode();
    obs = env.reset_episode().features;
  }
  return m;
}

TpgReport transition_pg_equivalence_check(FunAgent& agent,
                                          const std::vector<Tensor>& observations,
                                          const std::vector<double>& advantages) {
  const AgentConfig& acfg = agent.config();
  const std::size_t T = observations.size();
  if (advantages.size() != T) {
    throw std::invalid_argument("tpg check: advantages/observations mismatch");
  }

  agent.reset_episode();
  std::vector<FunStepCache> caches(T);
  for (std::size_t t = 0; t < T; ++t) {
    agent.forward_step(observations[t], nullptr, nullptr, &caches[t]);
  }

  TpgReport report;
  std::vector<StepUpstream> route_align(T), route_loglik(T);
  for (std::size_t t = 0; t + acfg.c < T; ++t) {
    Tensor delta = caches[t + acfg.c].s;
    axpy(-1.0, caches[t].s, delta);
    report.dcos_values.push_back(cosine_similarity(delta, caches[t].goal));

    route_align[t].dgoal = Tensor::zeros({acfg.d});
    route_loglik[t].dgoal = Tensor::zeros({acfg.d});
    // A degenerate pooled output emits a constant fallback goal; the update
    // is skipped there, identically on both routes.
    if (caches[t].goal_source != GoalSource::network) continue;
    double dn = norm2(delta);
    if (dn < kCosineNormFloor) continue;  // degenerate step: both routes vanish

    // Alignment form: advantage-weighted cosine gradient.
    cosine_similarity_backward(delta, caches[t].goal, advantages[t], nullptr,
                               &route_align[t].dgoal);
    // Log-likelihood form: for the directional transition model with a unit
    // mean direction, log p = (delta/|delta|) . g up to a normalizer that
    // does not depend on g.
    axpy(advantages[t] / dn, delta, route_loglik[t].dgoal);
  }

  ParamList params = agent.params();
  auto run = [&](std::vector<StepUpstream>& ups) {
    zero_grads(params);
    agent.backward_segment(caches, ups, false, true);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (auto& p : params) grads.push_back(*p.grad);
    return grads;
  };
  std::vector<Tensor> ga = run(route_align);
  std::vector<Tensor> gb = run(route_loglik);
  for (std::size_t i = 0; i < ga.size(); ++i) {
    for (std::size_t j = 0; j < ga[i].size(); ++j) {
      report.max_abs_deviation = std::max(
          report.max_abs_deviation, std::abs(ga[i].data[j] - gb[i].data[j]));
    }
  }
  agent.reset_episode();
  return report;
}

BaselineRolloutSegment baseline_collect_segment(BaselineAgent& agent,
                                                Environment& env, Rng& rng,
                                                Tensor& obs,
                                                std::size_t max_steps) {
  const BaselineConfig& cfg = agent.config();
  BaselineRolloutSegment seg;
  seg.initial_state = agent.snapshot_runtime();
  seg.caches.reserve(max_steps);
  seg.steps.reserve(max_steps);

  for (std::size_t k = 0; k < max_steps; ++k) {
    BaselineStepCache cache;
    BaselineStepResult res = agent.forward_step(obs, &cache);
    std::size_t action = act(res.pi, rng);
    agent.note_action(action);
    EnvStep es = env.step(action);

    StepData sd;
    sd.action = action;
    sd.reward_raw = es.reward;
    sd.reward = cfg.clip_rewards ? std::clamp(es.reward, -1.0, 1.0)
                                 : es.reward;
    sd.terminal = es.terminal;
    sd.trial_boundary = es.trial_boundary;

    seg.caches.push_back(std::move(cache));
    seg.steps.push_back(sd);
    obs = std::move(es.observation.features);
    if (es.terminal) {
      seg.ended_terminal = true;
      break;
    }
  }
  seg.cut_value = agent.eval_bootstrap(obs);
  return seg;
}

SegmentMetrics baseline_train_segment(BaselineAgent& agent, Environment& env,
                                      Rng& rng, Tensor& obs,
                                      double& episode_return_acc, RmsProp& opt,
                                      const TrainConfig& tcfg,
                                      std::size_t steps_done) {
  const BaselineConfig& cfg = agent.config();
  std::size_t K = cfg.bptt_len ? cfg.bptt_len : tcfg.bptt_len;
  BaselineRolloutSegment seg = baseline_collect_segment(agent, env, rng, obs, K);

  const std::size_t T = seg.steps.size();
  std::vector<double> rewards(T);
  std::vector<char> terminals(T);
  for (std::size_t t = 0; t < T; ++t) {
    rewards[t] = seg.steps[t].reward;
    terminals[t] = seg.steps[t].terminal ? 1 : 0;
  }
  std::vector<double> returns =
      discounted_returns(rewards, terminals, cfg.gamma, seg.cut_value);

  std::vector<BaselineUpstream> ups(T);
  SegmentMetrics m;
  m.steps = T;
  for (std::size_t t = 0; t < T; ++t) {
    const BaselineStepCache& cc = seg.caches[t];
    const double adv = returns[t] - cc.value;
    const std::size_t a = seg.steps[t].action;
    ups[t].dlogits = Tensor::zeros({cfg.num_actions});
    double entropy = 0.0;
    for (std::size_t j = 0; j < cfg.num_actions; ++j) {
      entropy -= cc.pi.data[j] * cc.log_pi.data[j];
    }
    for (std::size_t j = 0; j < cfg.num_actions; ++j) {
      ups[t].dlogits.data[j] = adv * (cc.pi.data[j] - (j == a ? 1.0 : 0.0));
      if (tcfg.entropy_weight > 0.0) {
        ups[t].dlogits.data[j] += tcfg.entropy_weight * cc.pi.data[j] *
                                  (cc.log_pi.data[j] + entropy);
      }
    }
    ups[t].dvalue = cc.value - returns[t];

    episode_return_acc += seg.steps[t].reward_raw;
    m.entropy_sum += entropy;
    m.vloss_e_sum += 0.5 * (cc.value - returns[t]) * (cc.value - returns[t]);
  }

  ParamList params = agent.params();
  zero_grads(params);
  agent.backward_segment(seg.caches, ups);
  opt.step(params, tcfg.lr_at(steps_done));

  if (seg.ended_terminal) {
    m.episodes_finished = 1;
    m.episode_return_sum = episode_return_acc;
    episode_return_acc = 0.0;
    agent.reset_episode();
    obs = env.reset_episode().features;
  }
  return m;
}

}  // namespace feudal
