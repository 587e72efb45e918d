#include "siamapn/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "siamapn/ops.hpp"

namespace siamapn {

Tensor ParameterSet::add(std::string name, Shape shape, bool trainable) {
  if (find(name) != nullptr) throw std::invalid_argument("ParameterSet: duplicate name " + name);
  Tensor t(std::move(shape));
  t.set_requires_grad(trainable);
  params_.push_back(Param{t, std::move(name), trainable});
  return params_.back().tensor;
}

const Param* ParameterSet::find(const std::string& name) const {
  for (const Param& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Param* ParameterSet::find(const std::string& name) {
  for (Param& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (Param& p : params_) p.tensor.zero_grad();
}

void ParameterSet::set_trainable(const std::string& prefix, bool trainable) {
  for (Param& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) {
      p.trainable = trainable;
      p.tensor.set_requires_grad(trainable);
    }
  }
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("ParameterSet::copy_values_from: parameter count differs");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Param& src = other.params_[i];
    Param& dst = params_[i];
    if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
      throw std::invalid_argument("ParameterSet::copy_values_from: mismatch at " + dst.name);
    }
    auto d = dst.tensor.data_mut();
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), d.begin());
  }
}

void init_uniform_fan_in(Tensor& t, std::size_t fan_in, double gain, Rng& rng) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& v : t.data_mut()) v = rng.uniform(-bound, bound);
}

Conv Conv::make(ParameterSet& ps, const std::string& name, std::size_t cin, std::size_t cout,
                std::size_t kernel, std::size_t stride, std::size_t pad) {
  Conv c;
  c.weight = ps.add(name + ".weight", Shape{cout, cin, kernel, kernel});
  c.bias = ps.add(name + ".bias", Shape{cout});
  c.stride = stride;
  c.pad = pad;
  return c;
}

void Conv::init(Rng& rng, double gain) const {
  Tensor w = weight;
  init_uniform_fan_in(w, weight.dim(1) * weight.dim(2) * weight.dim(3), gain, rng);
  Tensor b = bias;
  for (double& v : b.data_mut()) v = 0.0;
}

Tensor Conv::operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }

Ffn Ffn::make(ParameterSet& ps, const std::string& name, std::size_t channels,
              std::size_t hidden) {
  return Ffn{Conv::make(ps, name + ".fc1", channels, hidden, 1, 1, 0),
             Conv::make(ps, name + ".fc2", hidden, channels, 1, 1, 0)};
}

void Ffn::init(Rng& rng) const {
  fc1.init(rng, std::sqrt(2.0));
  fc2.init(rng, 1.0);
}

Tensor Ffn::operator()(const Tensor& v) const { return fc2(relu(fc1(v))); }

}  // namespace siamapn
