#include "spikes4/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "spikes4/error.hpp"

namespace spikes4 {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::contract: return "contract";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::training: return "training";
  }
  return "unknown";
}

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local Tape* g_active_tape = nullptr;

void require_defined(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("operation on an undefined tensor");
}
}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return from(shape, std::vector<double>(numel_of(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(numel_of(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(node_);
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const {
  require_defined(node_);
  return node_->data.size();
}

std::span<const double> Tensor::data() const {
  require_defined(node_);
  return node_->data;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a matrix, got " + shape_string(shape()));
  return node_->data[row * node_->shape[1] + col];
}

std::span<double> Tensor::mutable_data() {
  require_defined(node_);
  if (node_->recorded) throw ContractError("cannot mutate a tape-produced tensor");
  return node_->data;
}

bool Tensor::requires_grad() const {
  require_defined(node_);
  return node_->requires_grad;
}

bool Tensor::is_leaf() const {
  require_defined(node_);
  return !node_->recorded;
}

Tensor& Tensor::set_requires_grad(bool flag) {
  require_defined(node_);
  if (node_->recorded) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
  return *this;
}

std::span<const double> Tensor::grad() const {
  require_defined(node_);
  return node_->grad;
}

void Tensor::accumulate_grad(std::span<const double> g) {
  require_defined(node_);
  if (g.size() != node_->data.size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) +
                         " for tensor of shape " + shape_string(node_->shape));
  }
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) node_->grad[i] += g[i];
}

void Tensor::zero_grad() {
  require_defined(node_);
  node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  return from(shape(), to_vector(), requires_grad);
}

const std::vector<double>* Gradients::find(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  return it == grads_.end() ? nullptr : &it->second;
}

Gradients Tape::gradients(const Tensor& loss) const {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  std::unordered_map<const void*, std::vector<double>> seeds;
  seeds.emplace(loss.id(), std::vector<double>{1.0});
  return sweep(std::move(seeds));
}

Gradients Tape::gradients(std::span<const Tensor> outputs,
                          std::span<const std::vector<double>> seeds) const {
  if (outputs.size() != seeds.size()) {
    throw ContractError("gradients(): outputs and seeds differ in count");
  }
  std::unordered_map<const void*, std::vector<double>> init;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (seeds[i].size() != outputs[i].numel()) {
      throw DimensionError("seed of size " + std::to_string(seeds[i].size()) +
                           " for output of shape " + shape_string(outputs[i].shape()));
    }
    auto& slot = init[outputs[i].id()];
    if (slot.empty()) slot.assign(seeds[i].size(), 0.0);
    for (std::size_t j = 0; j < slot.size(); ++j) slot[j] += seeds[i][j];
  }
  return sweep(std::move(init));
}

Gradients Tape::sweep(std::unordered_map<const void*, std::vector<double>> grads) const {
  last_visited_ = 0;
  std::vector<std::vector<double>*> in_grads;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    ++last_visited_;
    auto found = grads.find(it->output.id());
    if (found == grads.end()) continue;
    // The output's gradient is final once its producing record is reached.
    std::vector<double> out_grad = std::move(found->second);
    grads.erase(found);

    in_grads.assign(it->inputs.size(), nullptr);
    for (std::size_t i = 0; i < it->inputs.size(); ++i) {
      const auto& in = it->inputs[i];
      if (!in.requires_grad()) continue;
      auto& slot = grads[in.id()];
      if (slot.empty()) slot.assign(in.numel(), 0.0);
      in_grads[i] = &slot;
    }
    it->backward(out_grad, in_grads);
  }

  // Whatever remains belongs to leaves (or outputs unreachable from the seeds).
  Gradients result;
  result.grads_ = std::move(grads);
  return result;
}

void Tape::backward(const Tensor& loss) const {
  Gradients g = gradients(loss);
  // Leaves are exactly the inputs of records that are not themselves recorded.
  for (const auto& rec : records_) {
    for (const auto& in : rec.inputs) {
      if (!in.is_leaf() || !in.requires_grad()) continue;
      auto it = g.grads_.find(in.id());
      if (it == g.grads_.end()) continue;
      Tensor leaf = in;
      leaf.accumulate_grad(it->second);
      g.grads_.erase(it);
    }
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Tensor make_op_result(const Shape& shape, std::vector<double> values,
                      const std::vector<Tensor>& inputs, BackwardFn backward) {
  Tensor out = Tensor::from(shape, std::move(values));
  Tape* tape = g_active_tape;
  if (tape == nullptr) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->recorded = true;
  tape->append({out, inputs, std::move(backward)});
  return out;
}

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw ContractError("backward() called with no active tape");
  tape->backward(loss);
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

void accumulate(std::span<Tensor> leaves, const Gradients& grads) {
  for (auto& leaf : leaves) {
    if (const auto* g = grads.find(leaf)) leaf.accumulate_grad(*g);
  }
}

}  // namespace spikes4
