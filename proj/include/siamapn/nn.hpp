#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "siamapn/tensor.hpp"

namespace siamapn {

struct Param {
  Tensor tensor;
  std::string name;
  bool trainable = true;
};

/// Deterministic 64-bit generator with portable real conversion (the
/// standard distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

/// Ordered registry of named parameters; names are unique.
class ParameterSet {
 public:
  Tensor add(std::string name, Shape shape, bool trainable = true);

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  const Param* find(const std::string& name) const;
  Param* find(const std::string& name);
  std::size_t count() const;

  void zero_grad();
  void set_trainable(const std::string& prefix, bool trainable);
  /// Copies values by name; both sets must hold identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<Param> params_;
};

/// He-style centered uniform init: U(-b, b) with b = gain * sqrt(3 / fan_in).
void init_uniform_fan_in(Tensor& t, std::size_t fan_in, double gain, Rng& rng);

/// Convolution layer with weight [Cout,Cin,k,k] and bias [Cout].
struct Conv {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv make(ParameterSet& ps, const std::string& name, std::size_t cin, std::size_t cout,
                   std::size_t kernel, std::size_t stride, std::size_t pad);
  void init(Rng& rng, double gain) const;
  Tensor operator()(const Tensor& x) const;
};

/// Two-layer bottleneck applied to [N,C,1,1] vectors: C -> hidden -> C with
/// ReLU between and a linear output.
struct Ffn {
  Conv fc1;
  Conv fc2;

  static Ffn make(ParameterSet& ps, const std::string& name, std::size_t channels,
                  std::size_t hidden);
  void init(Rng& rng) const;
  Tensor operator()(const Tensor& v) const;
};

}  // namespace siamapn
