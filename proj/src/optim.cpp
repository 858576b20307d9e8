#include "remix/optim.hpp"

#include <algorithm>
#include <cmath>

#include "remix/rng.hpp"

namespace remix {

Rng Rng::derive(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

Tensor Rng::randn(Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = normal();
  return Tensor(std::move(shape), std::move(v));
}

void ParamGroup::add(std::string tensor_name, Tensor t) {
  t.set_requires_grad(trainable_);
  tensors_.push_back({std::move(tensor_name), std::move(t)});
}

void ParamGroup::set_trainable(bool on) {
  trainable_ = on;
  for (auto& nt : tensors_) nt.tensor.set_requires_grad(on);
}

void ParamGroup::zero_grad() {
  for (auto& nt : tensors_) nt.tensor.zero_grad();
}

std::size_t ParamGroup::numel() const {
  std::size_t n = 0;
  for (const auto& nt : tensors_) n += nt.tensor.numel();
  return n;
}

std::vector<double> ParamGroup::flatten() const {
  std::vector<double> out;
  out.reserve(numel());
  for (const auto& nt : tensors_) out.insert(out.end(), nt.tensor.data().begin(), nt.tensor.data().end());
  return out;
}

void ParamGroup::assign(const std::vector<double>& flat) {
  if (flat.size() != numel())
    throw ShapeError("group '" + name_ + "' expects " + std::to_string(numel()) + " values, got " +
                     std::to_string(flat.size()));
  std::size_t off = 0;
  for (auto& nt : tensors_) {
    auto d = nt.tensor.mutable_data();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), d.size(), d.begin());
    off += d.size();
  }
}

bool ParamGroup::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(),
                     [](const NamedTensor& nt) { return nt.tensor.all_finite(); });
}

void adam_step(AdamState& state, const std::vector<ParamGroup*>& groups) {
  const bool any = std::any_of(groups.begin(), groups.end(),
                               [](const ParamGroup* g) { return g->trainable(); });
  if (!any) return;
  ++state.step;
  const AdamOptions& o = state.options;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  for (ParamGroup* g : groups) {
    if (!g->trainable()) continue;
    for (auto& nt : g->tensors()) {
      Tensor& p = nt.tensor;
      auto& mom = state.moments[&p.node()];
      if (mom.m.empty()) {
        mom.m.assign(p.numel(), 0.0);
        mom.v.assign(p.numel(), 0.0);
      }
      if (mom.m.size() != p.numel()) throw ShapeError("adam moments do not match '" + nt.name + "'");
      auto w = p.mutable_data();
      auto grad = p.grad();
      const bool has = !grad.empty();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = has ? grad[i] : 0.0;
        mom.m[i] = o.beta1 * mom.m[i] + (1.0 - o.beta1) * gi;
        mom.v[i] = o.beta2 * mom.v[i] + (1.0 - o.beta2) * gi * gi;
        const double mhat = mom.m[i] / bc1;
        const double vhat = mom.v[i] / bc2;
        w[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
      }
      p.zero_grad();
    }
  }
}

void adam_step(AdamState& state, ParamGroup& group) {
  adam_step(state, std::vector<ParamGroup*>{&group});
}

}  // namespace remix
