#ifndef REMIX_OPTIM_HPP_
#define REMIX_OPTIM_HPP_

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "remix/tensor.hpp"

namespace remix {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Named set of parameters switched in and out of training together.
/// Toggling trainable only flips requires_grad; values are never touched.
class ParamGroup {
 public:
  ParamGroup() = default;
  explicit ParamGroup(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  void rename(std::string name) { name_ = std::move(name); }

  void add(std::string tensor_name, Tensor t);
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  std::vector<NamedTensor>& tensors() { return tensors_; }

  bool trainable() const { return trainable_; }
  void set_trainable(bool on);
  void zero_grad();
  std::size_t numel() const;

  /// All values concatenated in registration order.
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);
  bool all_finite() const;

 private:
  std::string name_;
  std::vector<NamedTensor> tensors_;
  bool trainable_ = true;
};

struct AdamOptions {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };

  AdamOptions options;
  long step = 0;
  std::unordered_map<const detail::Node*, Moments> moments;

  AdamState() = default;
  explicit AdamState(AdamOptions o) : options(o) {}
};

/// One Adam update of every trainable group's parameters, then clears their
/// grads. Frozen groups are left bit-identical. A parameter without a grad
/// is treated as having gradient zero.
void adam_step(AdamState& state, const std::vector<ParamGroup*>& groups);
void adam_step(AdamState& state, ParamGroup& group);

}  // namespace remix

#endif  // REMIX_OPTIM_HPP_
