#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/rng.hpp"
#include "lqg/tensor.hpp"

namespace lqg {

template <class S>
struct AdamConfig {
  S lr;
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  S weight_decay = S(0);
};

template <class S>
struct AdamState {
  Eigen::Array<S, Eigen::Dynamic, 1> m, v;
  std::int64_t step = 0;
};

// Classic Adam with bias correction. Weight decay, when nonzero, is the
// original L2 form (added to the gradient before the moment updates).
template <class S>
class Adam {
 public:
  Adam(std::vector<ad::Tensor<S>> params, AdamConfig<S> cfg)
      : params_(std::move(params)), cfg_(cfg) {
    states_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      states_[i].m = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(params_[i].size());
      states_[i].v = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(params_[i].size());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      auto& st = states_[i];
      const auto& g0 = p.grad();
      if (!g0.isFinite().all())
        throw NumericError("non-finite gradient in parameter block '" + p.name() + "'");
      Eigen::Array<S, Eigen::Dynamic, 1> g = g0;
      if (cfg_.weight_decay != S(0)) g += cfg_.weight_decay * p.values();
      st.step += 1;
      st.m = cfg_.beta1 * st.m + (S(1) - cfg_.beta1) * g;
      st.v = cfg_.beta2 * st.v + (S(1) - cfg_.beta2) * g.square();
      const S bc1 = S(1) - std::pow(cfg_.beta1, static_cast<S>(st.step));
      const S bc2 = S(1) - std::pow(cfg_.beta2, static_cast<S>(st.step));
      p.values() -= cfg_.lr * (st.m / bc1) / ((st.v / bc2).sqrt() + cfg_.eps);
    }
  }

  std::vector<ad::Tensor<S>>& params() { return params_; }
  std::vector<AdamState<S>>& states() { return states_; }
  const AdamConfig<S>& config() const { return cfg_; }

 private:
  std::vector<ad::Tensor<S>> params_;
  AdamConfig<S> cfg_;
  std::vector<AdamState<S>> states_;
};

template <class S>
S global_grad_norm(std::span<ad::Tensor<S>> params) {
  S sq = S(0);
  for (auto& p : params) sq += p.grad().square().sum();
  return std::sqrt(sq);
}

// Joint rescaling g <- g * min(1, c / ||g||_2) over the concatenation of all
// gradients. Norms within a hair of c are treated as already clipped so the
// operation is bit-exact idempotent despite rounding in the rescale.
template <class S>
void clip_global_norm(std::span<ad::Tensor<S>> params, S c) {
  const S norm = global_grad_norm(params);
  if (norm <= c * (S(1) + S(1e-10)) || norm == S(0)) return;
  const S scale = c / norm;
  for (auto& p : params) p.grad() *= scale;
}

// Same operation on raw gradient arrays (the spec-level "gradient set" form).
template <class S>
void clip_global_norm(std::span<Eigen::Array<S, Eigen::Dynamic, 1>> grads, S c) {
  S sq = S(0);
  for (const auto& g : grads) sq += g.square().sum();
  const S norm = std::sqrt(sq);
  if (norm <= c * (S(1) + S(1e-10)) || norm == S(0)) return;
  const S scale = c / norm;
  for (auto& g : grads) g *= scale;
}

// I.i.d. N(0, 1/fan_in) entries from the given stream.
template <class S>
ad::Tensor<S> lecun_normal_init(ad::Shape shape, Eigen::Index fan_in, RngStream& rng,
                                std::string name = "param") {
  if (fan_in < 1) throw ConfigError("lecun_normal_init: fan_in must be >= 1");
  auto t = ad::Tensor<S>::leaf(std::move(shape), true, std::move(name));
  const S stddev = S(1) / std::sqrt(static_cast<S>(fan_in));
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t.values()(i) = stddev * static_cast<S>(rng.normal());
  return t;
}

}  // namespace lqg
