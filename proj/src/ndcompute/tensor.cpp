#include "msvdd/tensor.hpp"

#include <sstream>

#include "msvdd/errors.hpp"

namespace msvdd::nd {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::div: return "div";
        case OpKind::scale: return "scale";
        case OpKind::add_scalar: return "add_scalar";
        case OpKind::add_row: return "add_row";
        case OpKind::sub_row: return "sub_row";
        case OpKind::broadcast_rows: return "broadcast_rows";
        case OpKind::matmul: return "matmul";
        case OpKind::transpose: return "transpose";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::sum_axis: return "sum_axis";
        case OpKind::mean_axis: return "mean_axis";
        case OpKind::concat: return "concat";
        case OpKind::reshape: return "reshape";
        case OpKind::slice_rows: return "slice_rows";
        case OpKind::gather_rows: return "gather_rows";
        case OpKind::element: return "element";
        case OpKind::diag: return "diag";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::tanh: return "tanh";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::sqrt: return "sqrt";
        case OpKind::square: return "square";
        case OpKind::softplus: return "softplus";
        case OpKind::softmax: return "softmax";
        case OpKind::huber: return "huber";
        case OpKind::conv1d: return "conv1d";
        case OpKind::deconv1d: return "deconv1d";
        case OpKind::lstm: return "lstm";
        case OpKind::mahalanobis: return "mahalanobis";
        case OpKind::eigen_extremes: return "eigen_extremes";
    }
    return "?";
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : Tensor(std::move(shape), std::make_shared<const std::vector<double>>(std::move(values))) {}

Tensor::Tensor(Shape shape, Storage storage) : shape_(std::move(shape)), data_(std::move(storage)) {
    if (!data_ || shape_size(shape_) != data_->size()) {
        throw DimensionError("tensor shape " + shape_str(shape_) + " holds " +
                             std::to_string(shape_size(shape_)) + " values, got " +
                             std::to_string(data_ ? data_->size() : 0));
    }
    for (auto d : shape_) {
        if (d == 0) {
            throw DimensionError("tensor shape " + shape_str(shape_) + " has a zero extent");
        }
    }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double v) {
    auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::vector(std::vector<double> values) {
    auto n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return Tensor({n, n}, std::move(v));
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw DimensionError("rows() on non-matrix " + shape_str(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw DimensionError("cols() on non-matrix " + shape_str(shape_));
    return shape_[1];
}

std::span<const double> Tensor::values() const {
    if (!data_) return {};
    return {data_->data(), data_->size()};
}

double Tensor::at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
}

std::optional<std::size_t> Tensor::node_id() const {
    if (!tape_) return std::nullopt;
    return node_;
}

Tensor Tensor::detach() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = 0;
    return t;
}

std::span<double> GradSink::input(std::size_t slot) {
    auto id = inputs_.at(slot);
    if (id == Tape::kConstant) return {};
    auto& g = (*tape_.grads_)[id];
    if (g.empty()) g.assign(tape_.nodes_[id].size, 0.0);
    return {g.data(), g.size()};
}

std::vector<double> Gradients::of(const Tensor& t) const {
    if (t.tape() == tape_ && t.node_id() && *t.node_id() < by_node_.size() &&
        !by_node_[*t.node_id()].empty()) {
        return by_node_[*t.node_id()];
    }
    return std::vector<double>(t.size(), 0.0);
}

Tensor Gradients::tensor_of(const Tensor& t) const { return Tensor(t.shape(), of(t)); }

Tensor Tape::variable(const Tensor& value) {
    if (value.size() == 0) throw ContractError("variable() on empty tensor");
    Tensor t = value.detach();
    t.tape_ = this;
    t.node_ = nodes_.size();
    nodes_.push_back(Node{OpKind::leaf, t.size(), {}, {}});
    return t;
}

Tensor Tape::record(OpKind kind, Shape shape, Storage values,
                    std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
    return record(kind, std::move(shape), std::move(values), std::vector<const Tensor*>(inputs),
                  std::move(backward));
}

Tensor Tape::record(OpKind kind, Shape shape, Storage values,
                    const std::vector<const Tensor*>& inputs, BackwardFn backward) {
    Tensor out(std::move(shape), std::move(values));
    Tape* tape = nullptr;
    for (const Tensor* in : inputs) {
        if (!in->tape_) continue;
        if (tape && tape != in->tape_) {
            throw ContractError(std::string("inputs of ") + op_name(kind) + " live on different tapes");
        }
        tape = in->tape_;
    }
    if (!tape) return out;

    Node node{kind, out.size(), {}, std::move(backward)};
    node.inputs.reserve(inputs.size());
    for (const Tensor* in : inputs) {
        node.inputs.push_back(in->tape_ ? in->node_ : kConstant);
    }
    out.tape_ = tape;
    out.node_ = tape->nodes_.size();
    tape->nodes_.push_back(std::move(node));
    return out;
}

Gradients Tape::backward(const Tensor& loss) {
    if (loss.tape() != this) throw ContractError("backward: loss is not on this tape");
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    Gradients out;
    out.tape_ = this;
    out.by_node_.resize(nodes_.size());
    grads_ = &out.by_node_;
    out.by_node_[loss.node_] = {1.0};

    for (std::size_t i = loss.node_ + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (!node.backward || out.by_node_[i].empty()) continue;
        GradSink sink(*this, node.inputs);
        // by_node_ is never resized during the sweep, so g stays valid.
        const auto& g = out.by_node_[i];
        node.backward(std::span<const double>(g.data(), g.size()), sink);
    }
    grads_ = nullptr;
    return out;
}

} // namespace msvdd::nd
