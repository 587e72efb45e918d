#include "siamapn/tape.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace siamapn {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};
thread_local Tape* current_tape = nullptr;

}  // namespace

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

Tape::~Tape() {
  if (current_tape == this) current_tape = nullptr;
}

Tape* Tape::active() { return current_tape; }

void Tape::record(const std::shared_ptr<detail::TensorNode>& output, BackwardFn fn) {
  if (consumed_) {
    throw AutodiffError("Tape::record: tape already consumed by backward(); call reset()");
  }
  output->tape_id = id_;
  output->tape_generation = generation_;
  output->tape_index = entries_.size();
  entries_.push_back(Entry{output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw AutodiffError("backward: undefined loss tensor");
  if (loss.numel() != 1) {
    throw AutodiffError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (consumed_) throw AutodiffError("backward: tape already consumed; call reset() first");
  const auto& node = loss.node();
  if (node->tape_id != id_ || node->tape_generation != generation_ ||
      node->tape_index >= entries_.size() || entries_[node->tape_index].output != node) {
    throw AutodiffError("backward: loss is detached from this tape");
  }
  node->grad_buffer()[0] += 1.0;
  for (std::size_t i = node->tape_index + 1; i-- > 0;) {
    Entry& e = entries_[i];
    if (e.output->grad.empty()) continue;
    e.backward();
  }
  consumed_ = true;
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
  ++generation_;
}

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(current_tape) { current_tape = nullptr; }
NoGradScope::~NoGradScope() { current_tape = previous_; }

namespace autodiff {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (current_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->requires_grad()) return true;
  }
  return false;
}

void record(Tensor& out, Tape::BackwardFn fn) {
  out.set_requires_grad(true);
  current_tape->record(out.node(), std::move(fn));
}

void check_finite([[maybe_unused]] const Tensor& out, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (double v : out.data()) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(op) + ": produced a non-finite value");
    }
  }
#endif
}

}  // namespace autodiff

}  // namespace siamapn
