#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msvdd::nd {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    div,
    scale,
    add_scalar,
    add_row,
    sub_row,
    broadcast_rows,
    matmul,
    transpose,
    sum,
    mean,
    sum_axis,
    mean_axis,
    concat,
    reshape,
    slice_rows,
    gather_rows,
    element,
    diag,
    relu,
    sigmoid,
    tanh,
    exp,
    log,
    sqrt,
    square,
    softplus,
    softmax,
    huber,
    conv1d,
    deconv1d,
    lstm,
    mahalanobis,
    eigen_extremes,
};

const char* op_name(OpKind kind);

class Tape;

using Storage = std::shared_ptr<const std::vector<double>>;

// Row-major float64 array. A tensor without a tape is an immutable constant
// and may be shared across threads. A tensor on a tape is a node of that
// tape; the tape must outlive it.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);
    Tensor(Shape shape, Storage storage);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double v);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_ ? data_->size() : 0; }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const;
    double operator[](std::size_t i) const { return (*data_)[i]; }
    double at(std::size_t r, std::size_t c) const;
    double item() const;

    bool requires_grad() const { return tape_ != nullptr; }
    std::optional<std::size_t> node_id() const;
    Tape* tape() const { return tape_; }

    // Same values, no tape reference.
    Tensor detach() const;

    const Storage& storage() const { return data_; }

private:
    friend class Tape;

    Shape shape_;
    Storage data_;
    Tape* tape_ = nullptr;
    std::size_t node_ = 0;
};

// Write access to the gradient buffers of a node's inputs during backward.
class GradSink {
public:
    // Returns an empty span for inputs that are constants.
    std::span<double> input(std::size_t slot);

private:
    friend class Tape;
    GradSink(Tape& tape, const std::vector<std::size_t>& inputs) : tape_(tape), inputs_(inputs) {}
    Tape& tape_;
    const std::vector<std::size_t>& inputs_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, GradSink& sink)>;

class Gradients {
public:
    // Gradient of the loss w.r.t. t, zeros when t did not influence it.
    std::vector<double> of(const Tensor& t) const;
    Tensor tensor_of(const Tensor& t) const;

private:
    friend class Tape;
    std::vector<std::vector<double>> by_node_;
    const Tape* tape_ = nullptr;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so every node's
// inputs precede it. Confined to one thread.
class Tape {
public:
    static constexpr std::size_t kConstant = static_cast<std::size_t>(-1);

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a trainable leaf holding the values of `value`.
    Tensor variable(const Tensor& value);

    Gradients backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }
    OpKind kind(std::size_t node) const { return nodes_.at(node).kind; }
    const std::vector<std::size_t>& inputs(std::size_t node) const { return nodes_.at(node).inputs; }

    // Used by primitives. Inputs not on any tape are recorded as constants.
    static Tensor record(OpKind kind, Shape shape, Storage values,
                         std::initializer_list<const Tensor*> inputs, BackwardFn backward);
    static Tensor record(OpKind kind, Shape shape, Storage values,
                         const std::vector<const Tensor*>& inputs, BackwardFn backward);

private:
    friend class GradSink;

    struct Node {
        OpKind kind;
        std::size_t size;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::vector<double>>* grads_ = nullptr;
};

} // namespace msvdd::nd
