#include "feudal/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace feudal {

LinearLayer::LinearLayer(std::size_t in, std::size_t out, bool with_bias)
    : weight(Tensor::zeros({out, in})),
      grad_weight(Tensor::zeros({out, in})),
      in_(in),
      out_(out),
      with_bias_(with_bias) {
  if (in == 0 || out == 0) {
    throw std::invalid_argument("LinearLayer: zero-sized dimension");
  }
  if (with_bias_) {
    bias = Tensor::zeros({out});
    grad_bias = Tensor::zeros({out});
  }
}

void LinearLayer::init_uniform(Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (double& w : weight.data) w = rng.uniform(-bound, bound);
  // A nonzero bias also keeps rectifier pre-activations off the exact kink
  // when an upstream layer shuts off entirely.
  if (with_bias_) {
    for (double& b : bias.data) b = rng.uniform(-bound, bound);
  }
}

Tensor LinearLayer::forward(const Tensor& x) const {
  if (x.size() != in_) {
    throw std::invalid_argument("linear_forward: input size " +
                                std::to_string(x.size()) + " != " +
                                std::to_string(in_));
  }
  Tensor y = Tensor::zeros({out_});
  const double* w = weight.data.data();
  const double* xv = x.data.data();
  for (std::size_t o = 0; o < out_; ++o) {
    const double* row = w + o * in_;
    double acc = with_bias_ ? bias.data[o] : 0.0;
    for (std::size_t i = 0; i < in_; ++i) acc += row[i] * xv[i];
    y.data[o] = acc;
  }
  return y;
}

Tensor LinearLayer::backward(const Tensor& x, const Tensor& upstream) {
  if (x.size() != in_ || upstream.size() != out_) {
    throw std::invalid_argument("linear_backward: shape mismatch");
  }
  Tensor dx = Tensor::zeros({in_});
  const double* w = weight.data.data();
  double* gw = grad_weight.data.data();
  const double* xv = x.data.data();
  const double* up = upstream.data.data();
  double* dxv = dx.data.data();
  for (std::size_t o = 0; o < out_; ++o) {
    const double u = up[o];
    const double* row = w + o * in_;
    double* grow = gw + o * in_;
    for (std::size_t i = 0; i < in_; ++i) {
      grow[i] += u * xv[i];
      dxv[i] += u * row[i];
    }
    if (with_bias_) grad_bias.data[o] += u;
  }
  return dx;
}

void LinearLayer::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  if (with_bias_) out.push_back({prefix + ".bias", &bias, &grad_bias});
}

LstmCell::LstmCell(std::size_t input_size, std::size_t hidden_size)
    : input_weights(Tensor::zeros({4 * hidden_size, input_size})),
      recurrent_weights(Tensor::zeros({4 * hidden_size, hidden_size})),
      gate_biases(Tensor::zeros({4 * hidden_size})),
      grad_input_weights(Tensor::zeros({4 * hidden_size, input_size})),
      grad_recurrent_weights(Tensor::zeros({4 * hidden_size, hidden_size})),
      grad_gate_biases(Tensor::zeros({4 * hidden_size})),
      input_size_(input_size),
      hidden_size_(hidden_size) {
  if (input_size == 0 || hidden_size == 0) {
    throw std::invalid_argument("LstmCell: zero-sized dimension");
  }
}

void LstmCell::init_uniform(Rng& rng) {
  double bi = 1.0 / std::sqrt(static_cast<double>(input_size_));
  double br = 1.0 / std::sqrt(static_cast<double>(hidden_size_));
  for (double& w : input_weights.data) w = rng.uniform(-bi, bi);
  for (double& w : recurrent_weights.data) w = rng.uniform(-br, br);
  gate_biases.fill(0.0);
  // Forget block sits second in the (i, f, o, c) layout.
  for (std::size_t j = 0; j < hidden_size_; ++j) {
    gate_biases.data[hidden_size_ + j] = 1.0;
  }
}

LstmState LstmCell::zero_state() const {
  return {Tensor::zeros({hidden_size_}), Tensor::zeros({hidden_size_})};
}

LstmState LstmCell::forward(const Tensor& x, const LstmState& state,
                            LstmCache* cache) const {
  const std::size_t H = hidden_size_;
  if (x.size() != input_size_ || state.h.size() != H || state.c.size() != H) {
    throw std::invalid_argument("lstm_forward: shape mismatch");
  }

  // pre = Wx x + Wh h + b, four stacked gate blocks
  std::vector<double> pre(4 * H);
  const double* wx = input_weights.data.data();
  const double* wh = recurrent_weights.data.data();
  for (std::size_t g = 0; g < 4 * H; ++g) {
    double acc = gate_biases.data[g];
    const double* rx = wx + g * input_size_;
    for (std::size_t i = 0; i < input_size_; ++i) acc += rx[i] * x.data[i];
    const double* rh = wh + g * H;
    for (std::size_t i = 0; i < H; ++i) acc += rh[i] * state.h.data[i];
    pre[g] = acc;
  }

  LstmState out{Tensor::zeros({H}), Tensor::zeros({H})};
  Tensor gi = Tensor::zeros({H}), gf = Tensor::zeros({H});
  Tensor go = Tensor::zeros({H}), gc = Tensor::zeros({H});
  Tensor tanh_c = Tensor::zeros({H});
  for (std::size_t j = 0; j < H; ++j) {
    double i_g = sigmoid(pre[j]);
    double f_g = sigmoid(pre[H + j]);
    double o_g = sigmoid(pre[2 * H + j]);
    double c_g = std::tanh(pre[3 * H + j]);
    double c_new = f_g * state.c.data[j] + i_g * c_g;
    double tc = std::tanh(c_new);
    gi.data[j] = i_g;
    gf.data[j] = f_g;
    go.data[j] = o_g;
    gc.data[j] = c_g;
    out.c.data[j] = c_new;
    tanh_c.data[j] = tc;
    out.h.data[j] = o_g * tc;
  }

  if (cache) {
    cache->cell = this;
    cache->x = x;
    cache->h_prev = state.h;
    cache->c_prev = state.c;
    cache->gate_i = std::move(gi);
    cache->gate_f = std::move(gf);
    cache->gate_o = std::move(go);
    cache->gate_c = std::move(gc);
    cache->c_new = out.c;
    cache->tanh_c_new = std::move(tanh_c);
  }
  return out;
}

void LstmCell::backward(const LstmCache& cache, const Tensor& upstream_h,
                        const Tensor& upstream_c, Tensor& grad_x,
                        Tensor& grad_h_prev, Tensor& grad_c_prev) {
  const std::size_t H = hidden_size_;
  if (cache.cell != this) {
    throw std::logic_error("lstm_backward: cache does not belong to this cell");
  }
  if (cache.x.size() != input_size_ || cache.gate_i.size() != H ||
      upstream_h.size() != H || upstream_c.size() != H) {
    throw std::logic_error("lstm_backward: stale or mismatched cache");
  }

  grad_x = Tensor::zeros({input_size_});
  grad_h_prev = Tensor::zeros({H});
  grad_c_prev = Tensor::zeros({H});

  std::vector<double> dpre(4 * H);
  for (std::size_t j = 0; j < H; ++j) {
    double i_g = cache.gate_i.data[j];
    double f_g = cache.gate_f.data[j];
    double o_g = cache.gate_o.data[j];
    double c_g = cache.gate_c.data[j];
    double tc = cache.tanh_c_new.data[j];
    double dh = upstream_h.data[j];
    double dc = upstream_c.data[j] + dh * o_g * (1.0 - tc * tc);
    double do_g = dh * tc;
    double di = dc * c_g;
    double df = dc * cache.c_prev.data[j];
    double dcand = dc * i_g;
    grad_c_prev.data[j] = dc * f_g;
    dpre[j] = di * i_g * (1.0 - i_g);
    dpre[H + j] = df * f_g * (1.0 - f_g);
    dpre[2 * H + j] = do_g * o_g * (1.0 - o_g);
    dpre[3 * H + j] = dcand * (1.0 - c_g * c_g);
  }

  const double* wx = input_weights.data.data();
  const double* wh = recurrent_weights.data.data();
  double* gwx = grad_input_weights.data.data();
  double* gwh = grad_recurrent_weights.data.data();
  for (std::size_t g = 0; g < 4 * H; ++g) {
    const double d = dpre[g];
    if (d == 0.0) continue;
    grad_gate_biases.data[g] += d;
    const double* rx = wx + g * input_size_;
    double* grx = gwx + g * input_size_;
    for (std::size_t i = 0; i < input_size_; ++i) {
      grx[i] += d * cache.x.data[i];
      grad_x.data[i] += d * rx[i];
    }
    const double* rh = wh + g * H;
    double* grh = gwh + g * H;
    for (std::size_t i = 0; i < H; ++i) {
      grh[i] += d * cache.h_prev.data[i];
      grad_h_prev.data[i] += d * rh[i];
    }
  }
}

void LstmCell::collect_params(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".input_weights", &input_weights,
                 &grad_input_weights});
  out.push_back({prefix + ".recurrent_weights", &recurrent_weights,
                 &grad_recurrent_weights});
  out.push_back({prefix + ".gate_biases", &gate_biases, &grad_gate_biases});
}

Tensor softmax(const Tensor& logits) {
  if (logits.empty()) {
    throw std::invalid_argument("softmax: empty input");
  }
  assert_finite(logits, "softmax input");
  double mx = *std::max_element(logits.data.begin(), logits.data.end());
  Tensor out = Tensor::zeros(logits.shape);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.data[i] = std::exp(logits.data[i] - mx);
    sum += out.data[i];
  }
  for (double& v : out.data) v /= sum;
  return out;
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.empty()) {
    throw std::invalid_argument("log_softmax: empty input");
  }
  assert_finite(logits, "log_softmax input");
  double mx = *std::max_element(logits.data.begin(), logits.data.end());
  double sum = 0.0;
  for (double v : logits.data) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  Tensor out = Tensor::zeros(logits.shape);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.data[i] = logits.data[i] - lse;
  }
  return out;
}

Tensor log_softmax_backward(const Tensor& log_probs, const Tensor& upstream) {
  if (log_probs.size() != upstream.size()) {
    throw std::invalid_argument("log_softmax_backward: size mismatch");
  }
  double usum = 0.0;
  for (double u : upstream.data) usum += u;
  Tensor dx = Tensor::zeros(log_probs.shape);
  for (std::size_t i = 0; i < dx.size(); ++i) {
    dx.data[i] = upstream.data[i] - std::exp(log_probs.data[i]) * usum;
  }
  return dx;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: size mismatch");
  }
  double na = norm2(a), nb = norm2(b);
  if (na < kCosineNormFloor || nb < kCosineNormFloor) return 0.0;
  double v = dot(a, b) / (na * nb);
  return std::clamp(v, -1.0, 1.0);
}

void cosine_similarity_backward(const Tensor& a, const Tensor& b,
                                double upstream, Tensor* grad_a,
                                Tensor* grad_b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity_backward: size mismatch");
  }
  double na = norm2(a), nb = norm2(b);
  if (na < kCosineNormFloor || nb < kCosineNormFloor) return;
  double ab = dot(a, b);
  double inv = 1.0 / (na * nb);
  // d cos / da = b/(|a||b|) - (a.b) a / (|a|^3 |b|)
  if (grad_a) {
    double ka = ab / (na * na);
    for (std::size_t i = 0; i < a.size(); ++i) {
      grad_a->data[i] += upstream * inv * (b.data[i] - ka * a.data[i]);
    }
  }
  if (grad_b) {
    double kb = ab / (nb * nb);
    for (std::size_t i = 0; i < b.size(); ++i) {
      grad_b->data[i] += upstream * inv * (a.data[i] - kb * b.data[i]);
    }
  }
}

}  // namespace feudal
