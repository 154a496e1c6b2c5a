#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace migt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized like data iff requires_grad
    bool requires_grad = false;
    bool leaf = true;
};

}  // namespace detail

/// Shared handle to an n-dimensional row-major array of doubles.
///
/// Copies of a Tensor alias the same storage; this is what lets parameters
/// accumulate gradients across every use inside one forward pass. Values are
/// immutable once created unless the tensor is a leaf (parameters, inputs),
/// which the optimizer and initializers update in place.
class Tensor {
   public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    /// Writable view of a leaf tensor's values. Throws StateError for op outputs.
    std::span<double> mutable_data() const;
    double item() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    bool is_leaf() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad() const;
    void zero_grad() const;

    /// Deep copy of the values with no gradient tracking.
    Tensor detach() const;
    /// Deep copy of the values as a fresh leaf with the given grad flag.
    Tensor clone_leaf(bool requires_grad) const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    // Used by op implementations.
    static Tensor from_op(Shape shape, std::vector<double> data, bool requires_grad);

   private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable operations executed while it is active.
///
/// Recording order is execution order, which is a topological order of the
/// computation graph; backward replays it in reverse, visiting every node
/// exactly once.
class Tape {
   public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn);
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }
    /// Drops all recorded nodes so the tape can be reused for a new pass.
    void reset();

   private:
    friend void backward(const Tensor& loss, Tape& tape);

    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

/// Makes `tape` the recording target for the current thread for the scope's
/// lifetime. Without an active tape ops compute values only.
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

/// Populates grad on every tensor reachable from `loss` through `tape`.
/// Throws ContractError for a non-scalar loss and StateError when the tape
/// has already been replayed.
void backward(const Tensor& loss, Tape& tape);

}  // namespace migt
