#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

// Minimal deterministic neural-network engine: dense layers, residual
// blocks, single-head scaled-dot-product self-attention, dropout, layer
// normalization, sigmoid+BCE and Adam, with analytic gradients verified
// against central differences. Fixed architecture, CPU doubles, no autodiff.

namespace sleicl::nn {

enum class Activation { none, relu };
enum class Phase { train, eval };

struct Tensor {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;  // row-major

  Tensor() = default;
  Tensor(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }
  size_t size() const { return data.size(); }
};

/// Asserts every entry is finite; `who` names the producing op.
void check_finite(const Tensor& t, const char* who);

struct AdamState {
  std::vector<double> m, v;
  int64_t t = 0;
};

/// One parameter tensor with its gradient accumulator and Adam state.
struct Param {
  Tensor value;
  Tensor grad;
  AdamState adam;

  void resize(size_t r, size_t c);
  void zero_grad();
};

struct ParamRef {
  std::string name;
  Param* param;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update from the accumulated gradient; increments the
/// per-parameter step counter.
void adam_step(Param& p, const AdamConfig& cfg);

// --- layers ----------------------------------------------------------------

class Dense {
 public:
  void init(size_t in, size_t out, Activation act, std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  /// Accumulates weight/bias grads, returns dL/dx.
  Tensor backward(const Tensor& dy);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);

  size_t in_dim() const { return w.value.rows; }
  size_t out_dim() const { return w.value.cols; }

  Param w;  // in x out
  Param b;  // 1 x out
  Activation act = Activation::none;

 private:
  Tensor x_cache_, z_cache_;
};

/// y = x + f(x), f = relu-dense then linear dense, both width-preserving
/// through `hidden`.
class ResidualBlock {
 public:
  void init(size_t width, size_t hidden, std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);

  Dense fc1, fc2;
};

/// Single-head softmax(Q K^T / sqrt(d)) V over length-2 sequences. The
/// input stacks sequences: rows 2i and 2i+1 belong to pair i, so a 2 x d
/// tensor is one sequence and a 2B x d tensor is a batch of B.
class SelfAttention {
 public:
  void init(size_t dim, std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);

  Dense wq, wk, wv;  // d -> d, linear

 private:
  Tensor q_, k_, v_, attn_;  // attn_: one softmax row pair per sequence
};

enum class ForwardMode { dropout, normalize };

/// Dense layer followed by inverted dropout (train only) or per-row layer
/// normalization with affine scale/shift.
class ForwardModule {
 public:
  void init(size_t in, size_t out, ForwardMode mode, double p_drop,
            std::mt19937_64& rng);
  Tensor forward(const Tensor& x, Phase phase, std::mt19937_64& rng);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<ParamRef>& out, const std::string& prefix);

  Dense dense;
  ForwardMode mode = ForwardMode::dropout;
  double p_drop = 0.1;
  Param gamma, beta;  // layernorm affine

 private:
  Tensor mask_;           // dropout keep/scale factors
  Tensor xhat_, inv_std_; // layernorm caches
  Phase last_phase_ = Phase::eval;
};

// --- loss ------------------------------------------------------------------

struct BceResult {
  double loss = 0.0;
  double dlogit = 0.0;  // sigmoid(logit) - target
};

/// Numerically stable binary cross-entropy on a raw logit, target in {0,1}.
BceResult sigmoid_bce(double logit, double target);

double sigmoid(double logit);

// --- gradient verification ---------------------------------------------------

/// A network exposed to the checker: `loss` runs forward+loss at the current
/// parameters (eval phase); `compute_grads` zeroes grads and runs
/// forward+backward once.
struct FdProblem {
  std::function<double()> loss;
  std::function<void()> compute_grads;
  std::vector<ParamRef> params;
};

/// Central differences (step 1e-5) on a seeded random subset of at least
/// `min_params` parameters; returns the max relative error
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-4). Refuses to run
/// in train phase (dropout would desynchronize the two loss evaluations).
double finite_difference_check(FdProblem& problem, size_t min_params,
                               uint64_t seed, Phase phase);

// --- serialization ------------------------------------------------------------

nlohmann::json param_to_json(const Param& p);
void param_from_json(const nlohmann::json& obj, Param& p);

/// Seeded He-style fan-in uniform init used by every layer.
double he_uniform(std::mt19937_64& rng, size_t fan_in);

}  // namespace sleicl::nn
