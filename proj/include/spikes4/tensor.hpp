#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace spikes4 {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // leaf accumulator, empty until first use
  bool requires_grad = false;
  bool recorded = false;  // produced by a tape record (non-leaf)
};
}  // namespace detail

/// Receives the output gradient and one buffer per input (nullptr where the
/// input does not need a gradient). Implementations add into the buffers.
using BackwardFn = std::function<void(std::span<const double> out_grad,
                                      std::vector<std::vector<double>*>& in_grads)>;

/// Dense row-major array of doubles. Copies share the underlying node, so a
/// Tensor behaves like a handle; data is immutable once created except for
/// leaf updates made by an optimizer through mutable_data().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::vector<double> to_vector() const;
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t row, std::size_t col) const;

  /// Writable view of a leaf's values. Throws on tape-produced tensors.
  std::span<double> mutable_data();

  bool requires_grad() const;
  bool is_leaf() const;
  Tensor& set_requires_grad(bool flag);

  /// Accumulated gradient of a leaf; empty span when none has been written.
  std::span<const double> grad() const;
  void accumulate_grad(std::span<const double> g);
  void zero_grad();

  /// Copy of the values as a fresh leaf.
  Tensor detach(bool requires_grad = false) const;

  const void* id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend Tensor make_op_result(const Shape&, std::vector<double>,
                               const std::vector<Tensor>&, BackwardFn);
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Gradients produced by a reverse sweep, keyed by leaf identity.
class Gradients {
 public:
  const std::vector<double>* find(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const void*, std::vector<double>> grads_;
  friend class Tape;
};

/// Ordered record of executed differentiable operations. Records are appended
/// in execution order, which is always a valid topological order, so the
/// reverse sweep simply walks the record backwards.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  /// Reverse sweep from a scalar loss; returns leaf gradients without
  /// touching the leaves themselves.
  Gradients gradients(const Tensor& loss) const;

  /// Reverse sweep seeded with explicit output cotangents.
  Gradients gradients(std::span<const Tensor> outputs,
                      std::span<const std::vector<double>> seeds) const;

  /// gradients(loss) followed by accumulation into every reached leaf.
  void backward(const Tensor& loss) const;

  /// Number of records the last sweep processed.
  std::size_t last_visited() const { return last_visited_; }

 private:
  struct Record {
    Tensor output;
    std::vector<Tensor> inputs;
    BackwardFn backward;
  };
  void append(Record record) { records_.push_back(std::move(record)); }
  Gradients sweep(std::unordered_map<const void*, std::vector<double>> seeds) const;

  std::vector<Record> records_;
  mutable std::size_t last_visited_ = 0;

  friend Tensor make_op_result(const Shape&, std::vector<double>,
                               const std::vector<Tensor>&, BackwardFn);
};

/// Makes a tape the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Disables recording on the current thread for its lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Builds an op output. When a tape is active and any input requires a
/// gradient, the output is recorded together with its backward rule.
Tensor make_op_result(const Shape& shape, std::vector<double> values,
                      const std::vector<Tensor>& inputs, BackwardFn backward);

/// Backward through the active tape, accumulating into leaves.
void backward(const Tensor& loss);

void zero_grads(std::span<Tensor> params);

/// Adds per-leaf gradients into the leaves' accumulators, in the given order.
void accumulate(std::span<Tensor> leaves, const Gradients& grads);

}  // namespace spikes4
