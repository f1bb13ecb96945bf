#include <algorithm>
#include <cmath>

#include "msvdd/errors.hpp"
#include "msvdd/ops.hpp"

namespace msvdd::nd {

namespace {

using Values = std::vector<double>;

Storage make_storage(Values v) { return std::make_shared<const Values>(std::move(v)); }

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Describes the strided lanes a softmax reduces over.
struct Lanes {
    std::size_t count;   // number of independent softmaxes
    std::size_t length;  // elements per lane
    std::size_t stride;  // distance between consecutive lane elements
    std::size_t step;    // distance between consecutive lane starts
};

Lanes softmax_lanes(const Tensor& x, std::size_t axis) {
    if (x.rank() == 1 && axis == 0) return {1, x.size(), 1, 0};
    if (x.rank() == 2 && axis == 1) return {x.rows(), x.cols(), 1, x.cols()};
    if (x.rank() == 2 && axis == 0) return {x.cols(), x.rows(), x.cols(), 1};
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
}

} // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (x.size() == 0) throw DimensionError("softmax: empty axis");
    const Lanes lanes = softmax_lanes(x, axis);
    Values out(x.size());
    for (std::size_t l = 0; l < lanes.count; ++l) {
        const std::size_t base = l * lanes.step;
        double mx = x[base];
        for (std::size_t k = 1; k < lanes.length; ++k) mx = std::max(mx, x[base + k * lanes.stride]);
        double z = 0.0;
        for (std::size_t k = 0; k < lanes.length; ++k) {
            const double e = std::exp(x[base + k * lanes.stride] - mx);
            out[base + k * lanes.stride] = e;
            z += e;
        }
        for (std::size_t k = 0; k < lanes.length; ++k) out[base + k * lanes.stride] /= z;
    }
    auto y = make_storage(std::move(out));
    return Tape::record(OpKind::softmax, x.shape(), y, {&x}, [y, lanes](std::span<const double> g, GradSink& sink) {
        auto gx = sink.input(0);
        if (gx.empty()) return;
        for (std::size_t l = 0; l < lanes.count; ++l) {
            const std::size_t base = l * lanes.step;
            double dot = 0.0;
            for (std::size_t k = 0; k < lanes.length; ++k) {
                const std::size_t i = base + k * lanes.stride;
                dot += g[i] * (*y)[i];
            }
            for (std::size_t k = 0; k < lanes.length; ++k) {
                const std::size_t i = base + k * lanes.stride;
                gx[i] += (*y)[i] * (g[i] - dot);
            }
        }
    });
}

Tensor huber(const Tensor& y, const Tensor& yhat) {
    if (y.shape() != yhat.shape()) {
        throw DimensionError("huber: shape mismatch " + shape_str(y.shape()) + " vs " + shape_str(yhat.shape()));
    }
    const std::size_t n = y.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = std::abs(y[i] - yhat[i]);
        total += r <= 1.0 ? 0.5 * r * r : r - 0.5;
    }
    auto ys = y.storage();
    auto hs = yhat.storage();
    return Tape::record(OpKind::huber, {}, make_storage({total / static_cast<double>(n)}), {&y, &yhat},
                        [ys, hs, n](std::span<const double> g, GradSink& sink) {
                            auto gy = sink.input(0);
                            auto gh = sink.input(1);
                            const double f = g[0] / static_cast<double>(n);
                            for (std::size_t i = 0; i < n; ++i) {
                                const double d = f * std::clamp((*ys)[i] - (*hs)[i], -1.0, 1.0);
                                if (!gy.empty()) gy[i] += d;
                                if (!gh.empty()) gh[i] -= d;
                            }
                        });
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
    if (x.rank() != 2 || w.rank() != 3 || w.shape()[1] != x.cols() || stride == 0) {
        throw DimensionError("conv1d: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    }
    const std::size_t t_in = x.rows(), cin = x.cols();
    const std::size_t kernel = w.shape()[0], cout = w.shape()[2];
    if (kernel > t_in + 2 * padding) {
        throw DimensionError("conv1d: kernel " + std::to_string(kernel) + " larger than padded input " +
                             std::to_string(t_in + 2 * padding));
    }
    const std::size_t t_out = (t_in + 2 * padding - kernel) / stride + 1;

    Values out(t_out * cout, 0.0);
    auto xv = x.values();
    auto wv = w.values();
    for (std::size_t t = 0; t < t_out; ++t) {
        double* orow = out.data() + t * cout;
        for (std::size_t k = 0; k < kernel; ++k) {
            const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
            if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(t_in)) continue;
            const double* xrow = xv.data() + static_cast<std::size_t>(ti) * cin;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double xval = xrow[ci];
                const double* wrow = wv.data() + (k * cin + ci) * cout;
                for (std::size_t co = 0; co < cout; ++co) orow[co] += xval * wrow[co];
            }
        }
    }

    auto xs = x.storage();
    auto ws = w.storage();
    return Tape::record(
        OpKind::conv1d, {t_out, cout}, make_storage(std::move(out)), {&x, &w},
        [xs, ws, t_in, t_out, cin, cout, kernel, stride, padding](std::span<const double> g, GradSink& sink) {
            auto gx = sink.input(0);
            auto gw = sink.input(1);
            for (std::size_t t = 0; t < t_out; ++t) {
                const double* grow = g.data() + t * cout;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const std::ptrdiff_t ti =
                        static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
                    if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(t_in)) continue;
                    const std::size_t row = static_cast<std::size_t>(ti) * cin;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const std::size_t wbase = (k * cin + ci) * cout;
                        if (!gx.empty()) {
                            const double* wrow = ws->data() + wbase;
                            double acc = 0.0;
                            for (std::size_t co = 0; co < cout; ++co) acc += grow[co] * wrow[co];
                            gx[row + ci] += acc;
                        }
                        if (!gw.empty()) {
                            const double xval = (*xs)[row + ci];
                            double* gwrow = gw.data() + wbase;
                            for (std::size_t co = 0; co < cout; ++co) gwrow[co] += xval * grow[co];
                        }
                    }
                }
            }
        });
}

Tensor deconv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
    if (x.rank() != 2 || w.rank() != 3 || w.shape()[2] != x.cols() || stride == 0) {
        throw DimensionError("deconv1d: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    }
    const std::size_t t_in = x.rows(), cin = x.cols();
    const std::size_t kernel = w.shape()[0], cout = w.shape()[1];
    const std::ptrdiff_t len = static_cast<std::ptrdiff_t>((t_in - 1) * stride + kernel) -
                               2 * static_cast<std::ptrdiff_t>(padding);
    if (len <= 0) {
        throw DimensionError("deconv1d: nonpositive output length " + std::to_string(len) + " for input " +
                             shape_str(x.shape()));
    }
    const std::size_t t_out = static_cast<std::size_t>(len);

    Values out(t_out * cout, 0.0);
    auto xv = x.values();
    auto wv = w.values();
    for (std::size_t t = 0; t < t_in; ++t) {
        const double* xrow = xv.data() + t * cin;
        for (std::size_t k = 0; k < kernel; ++k) {
            const std::ptrdiff_t to = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
            if (to < 0 || to >= len) continue;
            double* orow = out.data() + static_cast<std::size_t>(to) * cout;
            for (std::size_t co = 0; co < cout; ++co) {
                const double* wrow = wv.data() + (k * cout + co) * cin;
                double acc = 0.0;
                for (std::size_t ci = 0; ci < cin; ++ci) acc += xrow[ci] * wrow[ci];
                orow[co] += acc;
            }
        }
    }

    auto xs = x.storage();
    auto ws = w.storage();
    return Tape::record(
        OpKind::deconv1d, {t_out, cout}, make_storage(std::move(out)), {&x, &w},
        [xs, ws, t_in, len, cin, cout, kernel, stride, padding](std::span<const double> g, GradSink& sink) {
            auto gx = sink.input(0);
            auto gw = sink.input(1);
            for (std::size_t t = 0; t < t_in; ++t) {
                const double* xrow = xs->data() + t * cin;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const std::ptrdiff_t to =
                        static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
                    if (to < 0 || to >= len) continue;
                    const double* grow = g.data() + static_cast<std::size_t>(to) * cout;
                    for (std::size_t co = 0; co < cout; ++co) {
                        const std::size_t wbase = (k * cout + co) * cin;
                        const double gval = grow[co];
                        if (!gx.empty()) {
                            const double* wrow = ws->data() + wbase;
                            double* gxrow = gx.data() + t * cin;
                            for (std::size_t ci = 0; ci < cin; ++ci) gxrow[ci] += gval * wrow[ci];
                        }
                        if (!gw.empty()) {
                            double* gwrow = gw.data() + wbase;
                            for (std::size_t ci = 0; ci < cin; ++ci) gwrow[ci] += gval * xrow[ci];
                        }
                    }
                }
            }
        });
}

Tensor lstm(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh, const Tensor& bias) {
    if (x.rank() != 2 || w_ih.rank() != 2 || w_hh.rank() != 2) {
        throw DimensionError("lstm: expected matrices, got " + shape_str(x.shape()) + ", " + shape_str(w_ih.shape()) +
                             ", " + shape_str(w_hh.shape()));
    }
    const std::size_t steps = x.rows(), cin = x.cols();
    const std::size_t hidden = w_hh.rows();
    const std::size_t g4 = 4 * hidden;
    if (w_ih.rows() != cin || w_ih.cols() != g4 || w_hh.cols() != g4 || bias.size() != g4) {
        throw DimensionError("lstm: shape mismatch x " + shape_str(x.shape()) + ", w_ih " + shape_str(w_ih.shape()) +
                             ", w_hh " + shape_str(w_hh.shape()) + ", bias " + shape_str(bias.shape()));
    }

    // gates: activated (i, f, g, o) per step; cells: c_t; hs: h_t
    auto gates = std::make_shared<Values>(steps * g4);
    auto cells = std::make_shared<Values>(steps * hidden);
    Values hs(steps * hidden);
    std::vector<double> pre(g4);
    auto xv = x.values();
    auto wi = w_ih.values();
    auto wh = w_hh.values();
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t j = 0; j < g4; ++j) pre[j] = bias[j];
        const double* xrow = xv.data() + t * cin;
        for (std::size_t c = 0; c < cin; ++c) {
            const double xval = xrow[c];
            const double* wrow = wi.data() + c * g4;
            for (std::size_t j = 0; j < g4; ++j) pre[j] += xval * wrow[j];
        }
        if (t > 0) {
            const double* hprev = hs.data() + (t - 1) * hidden;
            for (std::size_t c = 0; c < hidden; ++c) {
                const double hval = hprev[c];
                const double* wrow = wh.data() + c * g4;
                for (std::size_t j = 0; j < g4; ++j) pre[j] += hval * wrow[j];
            }
        }
        double* gate = gates->data() + t * g4;
        for (std::size_t j = 0; j < hidden; ++j) {
            gate[j] = sigmoid_scalar(pre[j]);
            gate[hidden + j] = sigmoid_scalar(pre[hidden + j]);
            gate[2 * hidden + j] = std::tanh(pre[2 * hidden + j]);
            gate[3 * hidden + j] = sigmoid_scalar(pre[3 * hidden + j]);
        }
        for (std::size_t j = 0; j < hidden; ++j) {
            const double c_prev = t > 0 ? (*cells)[(t - 1) * hidden + j] : 0.0;
            const double c = gate[hidden + j] * c_prev + gate[j] * gate[2 * hidden + j];
            (*cells)[t * hidden + j] = c;
            hs[t * hidden + j] = gate[3 * hidden + j] * std::tanh(c);
        }
    }

    auto h_store = make_storage(std::move(hs));
    auto xs = x.storage();
    auto wis = w_ih.storage();
    auto whs = w_hh.storage();
    std::shared_ptr<const Values> gates_c = gates;
    std::shared_ptr<const Values> cells_c = cells;
    return Tape::record(
        OpKind::lstm, {steps, hidden}, h_store, {&x, &w_ih, &w_hh, &bias},
        [xs, wis, whs, gates_c, cells_c, h_store, steps, cin, hidden, g4](std::span<const double> g, GradSink& sink) {
            auto gx = sink.input(0);
            auto gwi = sink.input(1);
            auto gwh = sink.input(2);
            auto gb = sink.input(3);
            Values dpre(steps * g4);
            Values dh_next(hidden, 0.0), dc_next(hidden, 0.0);
            for (std::size_t t = steps; t-- > 0;) {
                const double* gate = gates_c->data() + t * g4;
                double* da = dpre.data() + t * g4;
                for (std::size_t j = 0; j < hidden; ++j) {
                    const double ig = gate[j], fg = gate[hidden + j], cg = gate[2 * hidden + j],
                                 og = gate[3 * hidden + j];
                    const double c = (*cells_c)[t * hidden + j];
                    const double c_prev = t > 0 ? (*cells_c)[(t - 1) * hidden + j] : 0.0;
                    const double tc = std::tanh(c);
                    const double dh = g[t * hidden + j] + dh_next[j];
                    const double d_o = dh * tc;
                    const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
                    da[j] = dc * cg * ig * (1.0 - ig);
                    da[hidden + j] = dc * c_prev * fg * (1.0 - fg);
                    da[2 * hidden + j] = dc * ig * (1.0 - cg * cg);
                    da[3 * hidden + j] = d_o * og * (1.0 - og);
                    dc_next[j] = dc * fg;
                }
                // dh_{t-1} = W_hh * da ; dW_hh += h_{t-1}^T da
                for (std::size_t c = 0; c < hidden; ++c) {
                    const double* wrow = whs->data() + c * g4;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < g4; ++j) acc += wrow[j] * da[j];
                    dh_next[c] = acc;
                }
                if (!gwh.empty() && t > 0) {
                    const double* hprev = h_store->data() + (t - 1) * hidden;
                    for (std::size_t c = 0; c < hidden; ++c) {
                        double* grow = gwh.data() + c * g4;
                        for (std::size_t j = 0; j < g4; ++j) grow[j] += hprev[c] * da[j];
                    }
                }
            }
            for (std::size_t t = 0; t < steps; ++t) {
                const double* da = dpre.data() + t * g4;
                if (!gb.empty()) {
                    for (std::size_t j = 0; j < g4; ++j) gb[j] += da[j];
                }
                for (std::size_t c = 0; c < cin; ++c) {
                    const std::size_t row = t * cin + c;
                    const double* wrow = wis->data() + c * g4;
                    if (!gx.empty()) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < g4; ++j) acc += wrow[j] * da[j];
                        gx[row] += acc;
                    }
                    if (!gwi.empty()) {
                        double* grow = gwi.data() + c * g4;
                        const double xval = (*xs)[row];
                        for (std::size_t j = 0; j < g4; ++j) grow[j] += xval * da[j];
                    }
                }
            }
        });
}

} // namespace msvdd::nd
