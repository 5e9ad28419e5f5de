#include "sleicl/neuralnet.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sleicl/common.hpp"
#include "sleicl/kernels.hpp"

namespace sleicl::nn {

using nlohmann::json;

void check_finite(const Tensor& t, const char* who) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(who) + ": non-finite tensor entry");
    }
  }
}

void Param::resize(size_t r, size_t c) {
  value = Tensor(r, c);
  grad = Tensor(r, c);
  adam.m.assign(r * c, 0.0);
  adam.v.assign(r * c, 0.0);
  adam.t = 0;
}

void Param::zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }

double he_uniform(std::mt19937_64& rng, size_t fan_in) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  return (2.0 * detrand::uniform01(rng) - 1.0) * limit;
}

void adam_step(Param& p, const AdamConfig& cfg) {
  if (p.grad.size() != p.value.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  AdamState& s = p.adam;
  s.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  for (size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad.data[i];
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    p.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

// --- Dense -------------------------------------------------------------------

void Dense::init(size_t in, size_t out, Activation activation,
                 std::mt19937_64& rng) {
  act = activation;
  w.resize(in, out);
  b.resize(1, out);
  for (double& v : w.value.data) v = he_uniform(rng, in);
}

Tensor Dense::forward(const Tensor& x) {
  if (x.cols != w.value.rows)
    throw std::invalid_argument("dense: input width " + std::to_string(x.cols) +
                                " != weight rows " + std::to_string(w.value.rows));
  x_cache_ = x;
  Tensor z(x.rows, w.value.cols);
  kernels::matmul_nn(x.data.data(), w.value.data.data(), z.data.data(), x.rows,
                     x.cols, w.value.cols);
  for (size_t r = 0; r < z.rows; ++r)
    kernels::axpy(1.0, b.value.data.data(), z.row(r), z.cols);
  z_cache_ = z;
  if (act == Activation::relu) {
    for (double& v : z.data) v = v > 0.0 ? v : 0.0;
  }
  check_finite(z, "dense_layer");
  return z;
}

Tensor Dense::backward(const Tensor& dy) {
  if (dy.rows != z_cache_.rows || dy.cols != z_cache_.cols)
    throw std::invalid_argument("dense backward: gradient shape mismatch");
  Tensor dz = dy;
  if (act == Activation::relu) {
    for (size_t i = 0; i < dz.data.size(); ++i) {
      if (z_cache_.data[i] <= 0.0) dz.data[i] = 0.0;
    }
  }
  // dW += X^T dZ, db += column sums, dX = dZ W^T.
  Tensor dw(w.value.rows, w.value.cols);
  kernels::matmul_tn(x_cache_.data.data(), dz.data.data(), dw.data.data(),
                     w.value.rows, dz.rows, w.value.cols);
  kernels::axpy(1.0, dw.data.data(), w.grad.data.data(), dw.data.size());
  for (size_t r = 0; r < dz.rows; ++r)
    kernels::axpy(1.0, dz.row(r), b.grad.data.data(), dz.cols);

  Tensor dx(dz.rows, w.value.rows);
  kernels::matmul_nt(dz.data.data(), w.value.data.data(), dx.data.data(), dz.rows,
                     dz.cols, w.value.rows);
  return dx;
}

void Dense::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  out.push_back({prefix + ".w", &w});
  out.push_back({prefix + ".b", &b});
}

// --- ResidualBlock --------------------------------------------------------------

void ResidualBlock::init(size_t width, size_t hidden, std::mt19937_64& rng) {
  fc1.init(width, hidden, Activation::relu, rng);
  fc2.init(hidden, width, Activation::none, rng);
}

Tensor ResidualBlock::forward(const Tensor& x) {
  Tensor y = fc2.forward(fc1.forward(x));
  if (y.cols != x.cols)
    throw std::invalid_argument("residual_block: inner width mismatch");
  kernels::axpy(1.0, x.data.data(), y.data.data(), y.data.size());
  check_finite(y, "residual_block");
  return y;
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  Tensor dx = fc1.backward(fc2.backward(dy));
  kernels::axpy(1.0, dy.data.data(), dx.data.data(), dx.data.size());
  return dx;
}

void ResidualBlock::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

// --- SelfAttention ---------------------------------------------------------------

void SelfAttention::init(size_t dim, std::mt19937_64& rng) {
  wq.init(dim, dim, Activation::none, rng);
  wk.init(dim, dim, Activation::none, rng);
  wv.init(dim, dim, Activation::none, rng);
}

Tensor SelfAttention::forward(const Tensor& x) {
  if (x.rows % 2 != 0)
    throw std::invalid_argument("scaled_dot_attention: expects row pairs");
  q_ = wq.forward(x);
  k_ = wk.forward(x);
  v_ = wv.forward(x);
  const size_t d = x.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const size_t pairs = x.rows / 2;

  attn_ = Tensor(pairs * 2, 2);  // softmax rows per sequence
  Tensor y(x.rows, d);
  for (size_t p = 0; p < pairs; ++p) {
    const size_t r0 = 2 * p, r1 = 2 * p + 1;
    double s[2][2];
    s[0][0] = kernels::dot(q_.row(r0), k_.row(r0), d) * scale;
    s[0][1] = kernels::dot(q_.row(r0), k_.row(r1), d) * scale;
    s[1][0] = kernels::dot(q_.row(r1), k_.row(r0), d) * scale;
    s[1][1] = kernels::dot(q_.row(r1), k_.row(r1), d) * scale;
    for (int row = 0; row < 2; ++row) {
      const double mx = std::max(s[row][0], s[row][1]);
      const double e0 = std::exp(s[row][0] - mx);
      const double e1 = std::exp(s[row][1] - mx);
      const double z = e0 + e1;
      attn_.at(2 * p + static_cast<size_t>(row), 0) = e0 / z;
      attn_.at(2 * p + static_cast<size_t>(row), 1) = e1 / z;
    }
    for (int row = 0; row < 2; ++row) {
      const size_t out_row = 2 * p + static_cast<size_t>(row);
      const double a0 = attn_.at(out_row, 0);
      const double a1 = attn_.at(out_row, 1);
      double* dst = y.row(out_row);
      const double* v0 = v_.row(r0);
      const double* v1 = v_.row(r1);
      for (size_t c = 0; c < d; ++c) dst[c] = a0 * v0[c] + a1 * v1[c];
    }
  }
  check_finite(y, "scaled_dot_attention");
  return y;
}

Tensor SelfAttention::backward(const Tensor& dy) {
  const size_t d = dy.cols;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const size_t pairs = dy.rows / 2;

  Tensor dq(dy.rows, d), dk(dy.rows, d), dv(dy.rows, d);
  for (size_t p = 0; p < pairs; ++p) {
    const size_t r0 = 2 * p, r1 = 2 * p + 1;
    const double a[2][2] = {{attn_.at(r0, 0), attn_.at(r0, 1)},
                            {attn_.at(r1, 0), attn_.at(r1, 1)}};
    // dV = A^T dY
    for (size_t c = 0; c < d; ++c) {
      dv.at(r0, c) = a[0][0] * dy.at(r0, c) + a[1][0] * dy.at(r1, c);
      dv.at(r1, c) = a[0][1] * dy.at(r0, c) + a[1][1] * dy.at(r1, c);
    }
    // dA = dY V^T, then softmax backward row-wise into dS.
    double da[2][2];
    da[0][0] = kernels::dot(dy.row(r0), v_.row(r0), d);
    da[0][1] = kernels::dot(dy.row(r0), v_.row(r1), d);
    da[1][0] = kernels::dot(dy.row(r1), v_.row(r0), d);
    da[1][1] = kernels::dot(dy.row(r1), v_.row(r1), d);
    double ds[2][2];
    for (int row = 0; row < 2; ++row) {
      const double inner = da[row][0] * a[row][0] + da[row][1] * a[row][1];
      ds[row][0] = a[row][0] * (da[row][0] - inner);
      ds[row][1] = a[row][1] * (da[row][1] - inner);
    }
    // dQ = scale * dS K, dK = scale * dS^T Q.
    for (size_t c = 0; c < d; ++c) {
      dq.at(r0, c) = scale * (ds[0][0] * k_.at(r0, c) + ds[0][1] * k_.at(r1, c));
      dq.at(r1, c) = scale * (ds[1][0] * k_.at(r0, c) + ds[1][1] * k_.at(r1, c));
      dk.at(r0, c) = scale * (ds[0][0] * q_.at(r0, c) + ds[1][0] * q_.at(r1, c));
      dk.at(r1, c) = scale * (ds[0][1] * q_.at(r0, c) + ds[1][1] * q_.at(r1, c));
    }
  }

  Tensor dx = wq.backward(dq);
  const Tensor dx_k = wk.backward(dk);
  const Tensor dx_v = wv.backward(dv);
  kernels::axpy(1.0, dx_k.data.data(), dx.data.data(), dx.data.size());
  kernels::axpy(1.0, dx_v.data.data(), dx.data.data(), dx.data.size());
  return dx;
}

void SelfAttention::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  wq.collect(out, prefix + ".q");
  wk.collect(out, prefix + ".k");
  wv.collect(out, prefix + ".v");
}

// --- ForwardModule --------------------------------------------------------------

void ForwardModule::init(size_t in, size_t out, ForwardMode m, double p,
                         std::mt19937_64& rng) {
  if (m == ForwardMode::dropout && (p < 0.0 || p >= 1.0))
    throw std::invalid_argument("forward_module: p_drop must be in [0, 1)");
  mode = m;
  p_drop = p;
  dense.init(in, out, Activation::relu, rng);
  if (mode == ForwardMode::normalize) {
    gamma.resize(1, out);
    beta.resize(1, out);
    std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
  }
}

Tensor ForwardModule::forward(const Tensor& x, Phase phase, std::mt19937_64& rng) {
  Tensor h = dense.forward(x);
  last_phase_ = phase;

  if (mode == ForwardMode::dropout) {
    if (phase == Phase::eval || p_drop == 0.0) {
      mask_ = Tensor();
      return h;
    }
    // Inverted dropout: kept units scaled by 1/(1-p).
    mask_ = Tensor(h.rows, h.cols);
    const double keep_scale = 1.0 / (1.0 - p_drop);
    for (size_t i = 0; i < h.data.size(); ++i) {
      const bool keep = detrand::uniform01(rng) >= p_drop;
      mask_.data[i] = keep ? keep_scale : 0.0;
      h.data[i] *= mask_.data[i];
    }
    return h;
  }

  // Layer normalization over the feature dimension, then affine.
  constexpr double kEps = 1e-5;
  xhat_ = Tensor(h.rows, h.cols);
  inv_std_ = Tensor(h.rows, 1);
  Tensor y(h.rows, h.cols);
  for (size_t r = 0; r < h.rows; ++r) {
    double mean = 0.0;
    for (size_t c = 0; c < h.cols; ++c) mean += h.at(r, c);
    mean /= static_cast<double>(h.cols);
    double var = 0.0;
    for (size_t c = 0; c < h.cols; ++c) {
      const double d = h.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(h.cols);
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_.at(r, 0) = inv;
    for (size_t c = 0; c < h.cols; ++c) {
      xhat_.at(r, c) = (h.at(r, c) - mean) * inv;
      y.at(r, c) = gamma.value.data[c] * xhat_.at(r, c) + beta.value.data[c];
    }
  }
  check_finite(y, "forward_module.normalize");
  return y;
}

Tensor ForwardModule::backward(const Tensor& dy) {
  if (mode == ForwardMode::dropout) {
    Tensor dh = dy;
    if (last_phase_ == Phase::train && p_drop > 0.0) {
      for (size_t i = 0; i < dh.data.size(); ++i) dh.data[i] *= mask_.data[i];
    }
    return dense.backward(dh);
  }

  const size_t n = dy.cols;
  Tensor dh(dy.rows, dy.cols);
  for (size_t r = 0; r < dy.rows; ++r) {
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (size_t c = 0; c < n; ++c) {
      const double dxhat = dy.at(r, c) * gamma.value.data[c];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat_.at(r, c);
      gamma.grad.data[c] += dy.at(r, c) * xhat_.at(r, c);
      beta.grad.data[c] += dy.at(r, c);
    }
    const double inv = inv_std_.at(r, 0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t c = 0; c < n; ++c) {
      const double dxhat = dy.at(r, c) * gamma.value.data[c];
      dh.at(r, c) = inv * (dxhat - inv_n * sum_dxhat -
                           xhat_.at(r, c) * inv_n * sum_dxhat_xhat);
    }
  }
  return dense.backward(dh);
}

void ForwardModule::collect(std::vector<ParamRef>& out, const std::string& prefix) {
  dense.collect(out, prefix + ".dense");
  if (mode == ForwardMode::normalize) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }
}

// --- loss -----------------------------------------------------------------------

double sigmoid(double logit) {
  if (logit >= 0.0) {
    return 1.0 / (1.0 + std::exp(-logit));
  }
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

BceResult sigmoid_bce(double logit, double target) {
  if (target != 0.0 && target != 1.0)
    throw std::invalid_argument("sigmoid_bce: target must be 0 or 1");
  // loss = max(z,0) - z*t + log(1 + exp(-|z|)), the overflow-free form.
  const double z = logit;
  BceResult out;
  out.loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  out.dlogit = sigmoid(z) - target;
  return out;
}

// --- finite differences -----------------------------------------------------------

double finite_difference_check(FdProblem& problem, size_t min_params,
                               uint64_t seed, Phase phase) {
  if (phase == Phase::train)
    throw std::invalid_argument(
        "finite_difference_check: train phase would desynchronize dropout; "
        "use eval");

  problem.compute_grads();

  struct Slot {
    double* value;
    double analytic;
  };
  std::vector<Slot> slots;
  for (const ParamRef& ref : problem.params) {
    Param& p = *ref.param;
    for (size_t i = 0; i < p.value.size(); ++i)
      slots.push_back({&p.value.data[i], p.grad.data[i]});
  }

  std::mt19937_64 rng(seed);
  std::vector<size_t> chosen;
  if (slots.size() <= min_params) {
    chosen.resize(slots.size());
    for (size_t i = 0; i < slots.size(); ++i) chosen[i] = i;
  } else {
    chosen = detrand::sample_without_replacement(rng, slots.size(), min_params);
  }

  constexpr double kStep = 1e-5;
  double max_rel = 0.0;
  for (size_t idx : chosen) {
    Slot& s = slots[idx];
    const double original = *s.value;
    *s.value = original + kStep;
    const double up = problem.loss();
    *s.value = original - kStep;
    const double down = problem.loss();
    *s.value = original;
    const double numeric = (up - down) / (2.0 * kStep);
    const double denom = std::max({std::abs(s.analytic), std::abs(numeric), 1e-4});
    max_rel = std::max(max_rel, std::abs(s.analytic - numeric) / denom);
  }
  return max_rel;
}

// --- serialization ------------------------------------------------------------------

json param_to_json(const Param& p) {
  return json{{"rows", p.value.rows},
              {"cols", p.value.cols},
              {"values", p.value.data},
              {"adam", {{"m", p.adam.m}, {"v", p.adam.v}, {"t", p.adam.t}}}};
}

void param_from_json(const json& obj, Param& p) {
  const size_t rows = obj.at("rows").get<size_t>();
  const size_t cols = obj.at("cols").get<size_t>();
  p.resize(rows, cols);
  p.value.data = obj.at("values").get<std::vector<double>>();
  if (p.value.data.size() != rows * cols)
    throw std::runtime_error("param_from_json: value count does not match shape");
  p.adam.m = obj.at("adam").at("m").get<std::vector<double>>();
  p.adam.v = obj.at("adam").at("v").get<std::vector<double>>();
  p.adam.t = obj.at("adam").at("t").get<int64_t>();
}

}  // namespace sleicl::nn
