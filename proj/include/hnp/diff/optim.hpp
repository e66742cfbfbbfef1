#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hnp/diff/tensor.hpp"

namespace hnp::diff {

struct OptimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ordered registry of named learnable tensors. Names are the stable keys
/// used by checkpoints; registration order defines the Adam state layout.
class ParamSet {
 public:
  Tensor add(const std::string& name, Tensor t);
  const Tensor* find(const std::string& name) const;

  std::size_t size() const { return items_.size(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const std::pair<std::string, Tensor>& at(std::size_t i) const { return items_[i]; }

  void zero_grad();
  /// Flips grad tracking on every parameter (frozen copies for inference).
  void set_requires_grad(bool on);
  real grad_norm() const;
  /// Scales all grads down so the global norm is at most max_norm.
  void clip_grad_norm(real max_norm);
  std::size_t total_scalars() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamState {
  std::size_t step = 0;
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
  std::vector<std::vector<real>> m;
  std::vector<std::vector<real>> v;

  /// Moment shapes mirror the parameter set exactly.
  static AdamState init(const ParamSet& params);
};

/// Standard bias-corrected Adam update, in place. Throws OptimError naming
/// the parameter if its gradient contains a non-finite value; parameters
/// without a recorded gradient are treated as zero-gradient.
void adam_step(ParamSet& params, AdamState& state, real lr);

}  // namespace hnp::diff
