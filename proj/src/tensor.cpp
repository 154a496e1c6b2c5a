#include "migt/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

#include "migt/errors.hpp"

namespace migt {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape, std::size_t data_size) {
    for (auto extent : shape) {
        if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != data_size) {
        throw DimensionError("shape " + shape_string(shape) + " does not match " + std::to_string(data_size) +
                             " values");
    }
}

const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
    if (!impl) throw StateError("access to an undefined tensor");
    return *impl;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape, data.size());
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
    if (requires_grad) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::from_op(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor t(std::move(shape), std::move(data), requires_grad);
    t.impl_->leaf = false;
    return t;
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() const {
    checked(impl_);
    if (!impl_->leaf) throw StateError("only leaf tensors may be modified in place");
    return impl_->data;
}

double Tensor::item() const {
    const auto& impl = checked(impl_);
    if (impl.data.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(impl.shape));
    return impl.data[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }
bool Tensor::is_leaf() const { return checked(impl_).leaf; }

std::span<const double> Tensor::grad() const {
    const auto& impl = checked(impl_);
    if (!impl.requires_grad) throw StateError("tensor does not track gradients");
    return impl.grad;
}

std::span<double> Tensor::mutable_grad() const {
    checked(impl_);
    if (!impl_->requires_grad) throw StateError("tensor does not track gradients");
    return impl_->grad;
}

void Tensor::zero_grad() const {
    checked(impl_);
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return clone_leaf(false); }

Tensor Tensor::clone_leaf(bool requires_grad) const {
    const auto& impl = checked(impl_);
    return Tensor(impl.shape, impl.data, requires_grad);
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
    if (consumed_) throw StateError("cannot record onto a tape that was already replayed; reset it first");
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
}

void backward(const Tensor& loss, Tape& tape) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got " +
                            (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
    }
    if (tape.consumed_) throw StateError("backward called twice on the same tape without reset");
    if (!loss.requires_grad()) throw ContractError("loss does not depend on any tensor that requires grad");
    tape.consumed_ = true;
    loss.mutable_grad()[0] += 1.0;
    for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) it->fn();
}

}  // namespace migt
