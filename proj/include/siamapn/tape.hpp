#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "siamapn/tensor.hpp"

namespace siamapn {

/// Ordered record of differentiable ops. Ops append themselves while a tape
/// is active on the current thread (see TapeScope); entries are therefore in
/// topological order and backward() replays them in reverse exactly once.
///
/// A tape is single-threaded. Independent tapes may run on separate threads.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and propagates into every reachable tensor
  /// with requires_grad. Throws AutodiffError for a non-scalar or detached
  /// loss, or when called twice without reset().
  void backward(const Tensor& loss);

  /// Drops all entries so the tape can record a new pass.
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  /// Tape active on this thread, or nullptr (inference mode).
  static Tape* active();

  void record(const std::shared_ptr<detail::TensorNode>& output, BackwardFn fn);

 private:
  friend class TapeScope;

  struct Entry {
    std::shared_ptr<detail::TensorNode> output;
    BackwardFn backward;
  };

  std::uint64_t id_;
  std::uint64_t generation_ = 1;
  bool consumed_ = false;
  std::vector<Entry> entries_;
};

/// RAII activation of a tape for the current thread. Scopes nest.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// RAII suspension of recording (used for label computation and inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

namespace autodiff {

/// True when the result of an op over `inputs` must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Marks `out` as differentiable and appends `fn` to the active tape. The
/// closure must read out's grad and accumulate into the inputs it captured.
void record(Tensor& out, Tape::BackwardFn fn);

/// Debug-build check that an op produced finite values from finite inputs.
void check_finite(const Tensor& out, const char* op);

}  // namespace autodiff

}  // namespace siamapn
