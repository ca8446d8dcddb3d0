#pragma once

#include <string>
#include <vector>

#include "feudal/rng.hpp"
#include "feudal/tensor.hpp"

namespace feudal {

/// Named handle onto one parameter tensor and its gradient accumulator.
/// Checkpointing, the optimizer and the finite-difference harness all walk
/// the same registry, in the same order.
struct ParamView {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
};

using ParamList = std::vector<ParamView>;

inline void zero_grads(ParamList& params) {
  for (auto& p : params) p.grad->fill(0.0);
}

inline std::size_t param_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->size();
  return n;
}

/// Affine map y = W x (+ b). Bias presence is fixed at construction; a
/// no-bias layer never allocates or accumulates a bias gradient.
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out, bool with_bias);

  /// Weights and bias uniform in [-1/sqrt(in), +1/sqrt(in)].
  void init_uniform(Rng& rng);

  Tensor forward(const Tensor& x) const;

  /// Accumulates grad_weight += upstream (outer) x and grad_bias += upstream;
  /// returns the input gradient W^T upstream.
  Tensor backward(const Tensor& x, const Tensor& upstream);

  std::size_t in_size() const { return in_; }
  std::size_t out_size() const { return out_; }
  bool has_bias() const { return with_bias_; }

  void collect_params(const std::string& prefix, ParamList& out);

  Tensor weight;       // [out x in]
  Tensor bias;         // [out] when with_bias, else empty
  Tensor grad_weight;
  Tensor grad_bias;

 private:
  std::size_t in_ = 0, out_ = 0;
  bool with_bias_ = false;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

class LstmCell;

/// Forward-pass intermediates one backward call consumes. `cell` ties the
/// cache to the cell that produced it; backward rejects a mismatch.
struct LstmCache {
  const LstmCell* cell = nullptr;
  Tensor x, h_prev, c_prev;
  Tensor gate_i, gate_f, gate_o, gate_c;  // post-activation gate values
  Tensor c_new, tanh_c_new;
};

/// Standard LSTM cell (sigmoid input/forget/output gates, tanh candidate).
/// Gate block order within the stacked weights is (input, forget, output,
/// candidate). Forward is a pure function of (parameters, x, state).
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::size_t input_size, std::size_t hidden_size);

  /// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] with the matrix's
  /// own fan-in; biases zero except the forget block, which starts at 1.
  void init_uniform(Rng& rng);

  LstmState forward(const Tensor& x, const LstmState& state,
                    LstmCache* cache) const;

  /// Accumulates parameter gradients from one cached step; returns gradients
  /// for the step inputs.
  void backward(const LstmCache& cache, const Tensor& upstream_h,
                const Tensor& upstream_c, Tensor& grad_x, Tensor& grad_h_prev,
                Tensor& grad_c_prev);

  LstmState zero_state() const;

  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_size_; }

  void collect_params(const std::string& prefix, ParamList& out);

  Tensor input_weights;      // [4H x in]
  Tensor recurrent_weights;  // [4H x H]
  Tensor gate_biases;        // [4H]
  Tensor grad_input_weights;
  Tensor grad_recurrent_weights;
  Tensor grad_gate_biases;

 private:
  std::size_t input_size_ = 0, hidden_size_ = 0;
};

/// Max-subtracted softmax; output sums to 1 within 1e-12 for finite input.
Tensor softmax(const Tensor& logits);

/// Numerically stable log probabilities.
Tensor log_softmax(const Tensor& logits);

/// Gradient of a loss through log_softmax: given y = log_softmax(x) and
/// dL/dy, returns dL/dx = upstream - exp(y) * sum(upstream).
Tensor log_softmax_backward(const Tensor& log_probs, const Tensor& upstream);

/// Cosine similarity a.b / (|a||b|), in [-1, 1]. Either norm below
/// `kCosineNormFloor` makes the value (and both gradients) exactly zero.
inline constexpr double kCosineNormFloor = 1e-8;

double cosine_similarity(const Tensor& a, const Tensor& b);

/// Accumulates upstream * d cos(a,b) / d{a,b} into grad_a / grad_b.
/// Either output may be null when unneeded.
void cosine_similarity_backward(const Tensor& a, const Tensor& b,
                                double upstream, Tensor* grad_a,
                                Tensor* grad_b);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace feudal
