#include "hnp/diff/optim.hpp"

#include <cmath>

namespace hnp::diff {

Tensor ParamSet::add(const std::string& name, Tensor t) {
  if (find(name)) throw OptimError("ParamSet: duplicate parameter name '" + name + "'");
  items_.emplace_back(name, t);
  return t;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return &t;
  }
  return nullptr;
}

void ParamSet::zero_grad() {
  for (auto& [n, t] : items_) t.zero_grad();
}

void ParamSet::set_requires_grad(bool on) {
  for (auto& [n, t] : items_) t.node()->requires_grad = on;
}

real ParamSet::grad_norm() const {
  real sq = 0;
  for (const auto& [n, t] : items_) {
    if (!t.has_grad()) continue;
    for (real g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void ParamSet::clip_grad_norm(real max_norm) {
  const real norm = grad_norm();
  if (norm <= max_norm || norm == real(0)) return;
  const real factor = max_norm / norm;
  for (auto& [n, t] : items_) {
    if (!t.has_grad()) continue;
    for (auto& g : t.grad_mut()) g *= factor;
  }
}

std::size_t ParamSet::total_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

AdamState AdamState::init(const ParamSet& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t.numel(), real(0));
    s.v.emplace_back(t.numel(), real(0));
  }
  return s;
}

void adam_step(ParamSet& params, AdamState& state, real lr) {
  if (state.m.size() != params.size()) {
    throw OptimError("adam_step: state holds " + std::to_string(state.m.size()) +
                     " slots for " + std::to_string(params.size()) + " parameters");
  }
  state.step += 1;
  const real bc1 = real(1) - std::pow(state.beta1, real(state.step));
  const real bc2 = real(1) - std::pow(state.beta2, real(state.step));

  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& name = params.at(k).first;
    Tensor t = params.at(k).second;  // handle copy, shared storage
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != t.numel()) {
      throw OptimError("adam_step: state shape drifted for parameter '" + name + "'");
    }
    if (!t.has_grad()) continue;  // parameter untouched by the last loss
    auto grad = t.grad();
    auto w = t.values_mut();
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const real g = grad[i];
      if (!std::isfinite(g)) {
        throw OptimError("adam_step: non-finite gradient in parameter '" + name + "'");
      }
      m[i] = state.beta1 * m[i] + (real(1) - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (real(1) - state.beta2) * g * g;
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace hnp::diff
