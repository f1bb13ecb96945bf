#include "msvdd/ops.hpp"

#include <algorithm>
#include <cmath>

#include "msvdd/errors.hpp"

namespace msvdd::nd {

namespace {

using Values = std::vector<double>;

Storage make_storage(Values v) { return std::make_shared<const Values>(std::move(v)); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

void require_matrix(const char* op, const Tensor& a) {
    if (a.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
    }
}

// Elementwise unary op whose backward only needs input x and output y.
template <typename Fwd, typename Dydx>
Tensor unary(OpKind kind, const Tensor& a, Fwd fwd, Dydx dydx) {
    Values out(a.size());
    auto x = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
    auto y = make_storage(std::move(out));
    auto xs = a.storage();
    return Tape::record(kind, a.shape(), y, {&a}, [xs, y, dydx](std::span<const double> g, GradSink& sink) {
        auto ga = sink.input(0);
        if (ga.empty()) return;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * dydx((*xs)[i], (*y)[i]);
    });
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    Values out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tape::record(OpKind::add, a.shape(), make_storage(std::move(out)), {&a, &b},
                        [](std::span<const double> g, GradSink& sink) {
                            for (std::size_t slot = 0; slot < 2; ++slot) {
                                auto gi = sink.input(slot);
                                for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
                            }
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    Values out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tape::record(OpKind::sub, a.shape(), make_storage(std::move(out)), {&a, &b},
                        [](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                            auto gb = sink.input(1);
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    Values out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    auto as = a.storage();
    auto bs = b.storage();
    return Tape::record(OpKind::mul, a.shape(), make_storage(std::move(out)), {&a, &b},
                        [as, bs](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * (*bs)[i];
                            auto gb = sink.input(1);
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * (*as)[i];
                        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    Values out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
    auto y = make_storage(std::move(out));
    auto bs = b.storage();
    return Tape::record(OpKind::div, a.shape(), y, {&a, &b}, [y, bs](std::span<const double> g, GradSink& sink) {
        auto ga = sink.input(0);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / (*bs)[i];
        auto gb = sink.input(1);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i] * (*y)[i] / (*bs)[i];
    });
}

Tensor scale(const Tensor& a, double factor) {
    Values out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
    return Tape::record(OpKind::scale, a.shape(), make_storage(std::move(out)), {&a},
                        [factor](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
                        });
}

Tensor add_scalar(const Tensor& a, double c) {
    Values out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + c;
    return Tape::record(OpKind::add_scalar, a.shape(), make_storage(std::move(out)), {&a},
                        [](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                        });
}

namespace {

Tensor row_broadcast_op(OpKind kind, const Tensor& m, const Tensor& row, double sign) {
    const char* name = op_name(kind);
    require_matrix(name, m);
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    if (row.size() != cols) {
        throw DimensionError(std::string(name) + ": row " + shape_str(row.shape()) + " does not match " +
                             shape_str(m.shape()));
    }
    Values out(m.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = m[r * cols + c] + sign * row[c];
    }
    return Tape::record(kind, m.shape(), make_storage(std::move(out)), {&m, &row},
                        [rows, cols, sign](std::span<const double> g, GradSink& sink) {
                            auto gm = sink.input(0);
                            for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g[i];
                            auto gr = sink.input(1);
                            if (gr.empty()) return;
                            for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t c = 0; c < cols; ++c) gr[c] += sign * g[r * cols + c];
                            }
                        });
}

} // namespace

Tensor add_row(const Tensor& m, const Tensor& row) { return row_broadcast_op(OpKind::add_row, m, row, 1.0); }

Tensor sub_row(const Tensor& m, const Tensor& row) { return row_broadcast_op(OpKind::sub_row, m, row, -1.0); }

Tensor broadcast_rows(const Tensor& row, std::size_t rows) {
    if (rows == 0) throw DimensionError("broadcast_rows: zero rows");
    const std::size_t cols = row.size();
    Values out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) std::copy(row.values().begin(), row.values().end(), out.begin() + r * cols);
    return Tape::record(OpKind::broadcast_rows, {rows, cols}, make_storage(std::move(out)), {&row},
                        [rows, cols](std::span<const double> g, GradSink& sink) {
                            auto gr = sink.input(0);
                            if (gr.empty()) return;
                            for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t c = 0; c < cols; ++c) gr[c] += g[r * cols + c];
                            }
                        });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Values out(n * m, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = bv.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
    }
    auto as = a.storage();
    auto bs = b.storage();
    return Tape::record(OpKind::matmul, {n, m}, make_storage(std::move(out)), {&a, &b},
                        [as, bs, n, k, m](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            if (!ga.empty()) {
                                // dA = G * B^T
                                for (std::size_t i = 0; i < n; ++i) {
                                    for (std::size_t p = 0; p < k; ++p) {
                                        const double* brow = bs->data() + p * m;
                                        const double* grow = g.data() + i * m;
                                        double acc = 0.0;
                                        for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                                        ga[i * k + p] += acc;
                                    }
                                }
                            }
                            auto gb = sink.input(1);
                            if (!gb.empty()) {
                                // dB = A^T * G
                                for (std::size_t i = 0; i < n; ++i) {
                                    const double* grow = g.data() + i * m;
                                    for (std::size_t p = 0; p < k; ++p) {
                                        const double aip = (*as)[i * k + p];
                                        double* gbrow = gb.data() + p * m;
                                        for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
                                    }
                                }
                            }
                        });
}

Tensor transpose(const Tensor& a) {
    require_matrix("transpose", a);
    const std::size_t r = a.rows(), c = a.cols();
    Values out(a.size());
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    }
    return Tape::record(OpKind::transpose, {c, r}, make_storage(std::move(out)), {&a},
                        [r, c](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            if (ga.empty()) return;
                            for (std::size_t i = 0; i < r; ++i) {
                                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                            }
                        });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return Tape::record(OpKind::sum, {}, make_storage({s}), {&a}, [](std::span<const double> g, GradSink& sink) {
        auto ga = sink.input(0);
        for (auto& v : ga) v += g[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw DimensionError("mean: empty tensor");
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double n = static_cast<double>(a.size());
    return Tape::record(OpKind::mean, {}, make_storage({s / n}), {&a},
                        [n](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            for (auto& v : ga) v += g[0] / n;
                        });
}

namespace {

Tensor reduce_axis(OpKind kind, const Tensor& a, std::size_t axis, bool average) {
    require_matrix(op_name(kind), a);
    if (axis > 1) throw DimensionError(std::string(op_name(kind)) + ": axis " + std::to_string(axis) + " invalid");
    const std::size_t r = a.rows(), c = a.cols();
    const std::size_t n_out = axis == 0 ? c : r;
    const double f = average ? 1.0 / static_cast<double>(axis == 0 ? r : c) : 1.0;
    Values out(n_out, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += a[i * c + j];
    }
    for (auto& v : out) v *= f;
    return Tape::record(kind, {n_out}, make_storage(std::move(out)), {&a},
                        [r, c, axis, f](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            if (ga.empty()) return;
                            for (std::size_t i = 0; i < r; ++i) {
                                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += f * g[axis == 0 ? j : i];
                            }
                        });
}

} // namespace

Tensor sum_axis(const Tensor& a, std::size_t axis) { return reduce_axis(OpKind::sum_axis, a, axis, false); }

Tensor mean_axis(const Tensor& a, std::size_t axis) { return reduce_axis(OpKind::mean_axis, a, axis, true); }

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Tensor& first = parts.front();
    const bool is_vector = first.rank() == 1;
    if (!is_vector) require_matrix("concat", first);
    if (axis > (is_vector ? 0u : 1u)) throw DimensionError("concat: axis " + std::to_string(axis) + " invalid");

    // View every part as rows x cols; vectors are 1 x n joined along cols.
    auto rows_of = [&](const Tensor& t) { return is_vector ? std::size_t{1} : t.rows(); };
    auto cols_of = [&](const Tensor& t) { return is_vector ? t.size() : t.cols(); };
    const std::size_t eff_axis = is_vector ? 1 : axis;

    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != first.rank() ||
            (eff_axis == 0 ? cols_of(p) != cols_of(first) : rows_of(p) != rows_of(first))) {
            throw DimensionError("concat: shape mismatch " + shape_str(first.shape()) + " vs " + shape_str(p.shape()));
        }
        total += eff_axis == 0 ? rows_of(p) : cols_of(p);
    }
    const std::size_t out_rows = eff_axis == 0 ? total : rows_of(first);
    const std::size_t out_cols = eff_axis == 0 ? cols_of(first) : total;

    Values out(out_rows * out_cols);
    // offsets[k]: starting row (axis 0) or column (axis 1) of part k
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> extents;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t pr = rows_of(p), pc = cols_of(p);
        offsets.push_back(off);
        extents.push_back(eff_axis == 0 ? pr : pc);
        for (std::size_t i = 0; i < pr; ++i) {
            for (std::size_t j = 0; j < pc; ++j) {
                const std::size_t oi = eff_axis == 0 ? off + i : i;
                const std::size_t oj = eff_axis == 0 ? j : off + j;
                out[oi * out_cols + oj] = p[i * pc + j];
            }
        }
        off += eff_axis == 0 ? pr : pc;
    }
    Shape shape = is_vector ? Shape{total} : Shape{out_rows, out_cols};
    std::vector<const Tensor*> inputs;
    for (const auto& p : parts) inputs.push_back(&p);
    return Tape::record(OpKind::concat, shape, make_storage(std::move(out)), inputs,
                        [offsets, extents, eff_axis, out_rows, out_cols](std::span<const double> g, GradSink& sink) {
                            for (std::size_t k = 0; k < offsets.size(); ++k) {
                                auto gp = sink.input(k);
                                if (gp.empty()) continue;
                                const std::size_t pr = eff_axis == 0 ? extents[k] : out_rows;
                                const std::size_t pc = eff_axis == 0 ? out_cols : extents[k];
                                for (std::size_t i = 0; i < pr; ++i) {
                                    for (std::size_t j = 0; j < pc; ++j) {
                                        const std::size_t oi = eff_axis == 0 ? offsets[k] + i : i;
                                        const std::size_t oj = eff_axis == 0 ? j : offsets[k] + j;
                                        gp[i * pc + j] += g[oi * out_cols + oj];
                                    }
                                }
                            }
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    return Tape::record(OpKind::reshape, std::move(shape), a.storage(), {&a},
                        [](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                        });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require_matrix("slice_rows", a);
    if (begin >= end || end > a.rows()) {
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") invalid for " + shape_str(a.shape()));
    }
    const std::size_t c = a.cols();
    Values out(a.values().begin() + begin * c, a.values().begin() + end * c);
    return Tape::record(OpKind::slice_rows, {end - begin, c}, make_storage(std::move(out)), {&a},
                        [begin, c](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            if (ga.empty()) return;
                            for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
                        });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    require_matrix("gather_rows", a);
    if (rows.empty()) throw DimensionError("gather_rows: empty index set");
    const std::size_t c = a.cols();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    Values out(idx.size() * c);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= a.rows()) {
            throw DimensionError("gather_rows: row " + std::to_string(idx[k]) + " out of range for " +
                                 shape_str(a.shape()));
        }
        std::copy_n(a.values().begin() + idx[k] * c, c, out.begin() + k * c);
    }
    return Tape::record(OpKind::gather_rows, {idx.size(), c}, make_storage(std::move(out)), {&a},
                        [idx, c](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            if (ga.empty()) return;
                            for (std::size_t k = 0; k < idx.size(); ++k) {
                                for (std::size_t j = 0; j < c; ++j) ga[idx[k] * c + j] += g[k * c + j];
                            }
                        });
}

Tensor element(const Tensor& a, std::size_t index) {
    if (index >= a.size()) {
        throw DimensionError("element: index " + std::to_string(index) + " out of range for " + shape_str(a.shape()));
    }
    return Tape::record(OpKind::element, {}, make_storage({a[index]}), {&a},
                        [index](std::span<const double> g, GradSink& sink) {
                            auto ga = sink.input(0);
                            if (!ga.empty()) ga[index] += g[0];
                        });
}

Tensor diag(const Tensor& a) {
    require_matrix("diag", a);
    if (a.rows() != a.cols()) throw DimensionError("diag: non-square " + shape_str(a.shape()));
    const std::size_t n = a.rows();
    Values out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i * n + i];
    return Tape::record(OpKind::diag, {n}, make_storage(std::move(out)), {&a}, [n](std::span<const double> g, GradSink& sink) {
        auto ga = sink.input(0);
        if (ga.empty()) return;
        for (std::size_t i = 0; i < n; ++i) ga[i * n + i] += g[i];
    });
}

Tensor relu(const Tensor& a) {
    return unary(
        OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        OpKind::sigmoid, a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary(
        OpKind::tanh, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
    return unary(
        OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        OpKind::log, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary(
        OpKind::sqrt, a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
    return unary(
        OpKind::square, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor softplus(const Tensor& a) {
    return unary(
        OpKind::softplus, a,
        [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

} // namespace msvdd::nd
