#pragma once

#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "siamapn/bbox.hpp"
#include "siamapn/config.hpp"
#include "siamapn/model.hpp"
#include "siamapn/sequence.hpp"

namespace siamapn {

/// One training example: crops [1,3,T,T] / [1,3,S,S] and the target box in
/// search-patch pixels.
struct Triple {
  Tensor template_crop;
  Tensor search_crop;
  BBox gt;
};

/// Samples cfg.train.num_triples (template frame, search frame) pairs from
/// `seq` with rng seed cfg.train.seed. Search crops are jittered in position
/// (max_shift frame px) and size (scale_jitter).
std::vector<Triple> make_triples(const SyntheticSequence& seq, const Config& cfg);

/// Linear warmup to lr, then lr_decay at every milestone.
double learning_rate(const TrainConfig& cfg, std::size_t step);

/// SGD with momentum and L2 weight decay over the trainable parameters:
///   v = momentum * v + (g + wd * p);  p -= lr * v,
/// where g is first rescaled so its global L2 norm is at most max_grad_norm
/// (0 disables clipping). Throws TrainingError on a non-finite gradient,
/// before any update.
class Sgd {
 public:
  Sgd(ParameterSet& params, double momentum, double weight_decay, double max_grad_norm = 0.0);
  /// Returns the gradient norm before clipping.
  double step(double lr);
  /// Momentum buffers in parameter order (empty for frozen parameters).
  const std::vector<std::vector<double>>& buffers() const { return buffers_; }

 private:
  ParameterSet& params_;
  double momentum_;
  double weight_decay_;
  double max_grad_norm_;
  std::vector<std::vector<double>> buffers_;
};

struct StepLog {
  std::size_t step = 0;
  double total = 0.0;
  double cls1 = 0.0;
  double cls2 = 0.0;
  double cls3 = 0.0;
  double reg = 0.0;
  double grad_norm = 0.0;  // not written to the CSV
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kLossCsvHeader = "step,total,cls1,cls2,cls3,reg";
std::string loss_csv_row(const StepLog& s);

/// Runs cfg.train.steps SGD steps over `triples`, one CSV row per step to
/// `csv` when given. Throws TrainingError on a non-finite loss.
std::vector<StepLog> train_toy(SiamApnPP& model, const std::vector<Triple>& triples,
                               const Config& cfg, std::ostream* csv = nullptr);

}  // namespace siamapn
