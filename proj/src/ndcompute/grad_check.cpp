#include "msvdd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "msvdd/errors.hpp"

namespace msvdd::nd {

GradCheckReport grad_check_report(const ScalarFn& f, std::span<const Tensor> inputs, const GradCheckOptions& options) {
    if (!(options.eps >= 1e-6 && options.eps <= 1e-3)) {
        throw ContractError("grad_check: eps " + std::to_string(options.eps) + " outside [1e-6, 1e-3]");
    }

    std::vector<Tensor> constants;
    for (const auto& in : inputs) constants.push_back(in.detach());

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        std::vector<Tensor> vars;
        for (const auto& c : constants) vars.push_back(tape.variable(c));
        Tensor loss = f(vars);
        if (loss.size() != 1) throw ContractError("grad_check: function is not scalar-valued");
        if (!loss.requires_grad()) {
            for (const auto& v : vars) analytic.emplace_back(v.size(), 0.0);
        } else {
            auto grads = tape.backward(loss);
            for (const auto& v : vars) analytic.push_back(grads.of(v));
        }
    }

    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    for (std::size_t k = 0; k < constants.size(); ++k) {
        std::vector<std::size_t> coords(constants[k].size());
        std::iota(coords.begin(), coords.end(), 0);
        if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_input);
            std::sort(coords.begin(), coords.end());
        }
        for (auto i : coords) {
            auto eval_at = [&](double delta) {
                std::vector<double> vals(constants[k].values().begin(), constants[k].values().end());
                vals[i] += delta;
                std::vector<Tensor> args = constants;
                args[k] = Tensor(constants[k].shape(), std::move(vals));
                return f(args).item();
            };
            const double up = eval_at(options.eps);
            const double down = eval_at(-options.eps);
            const double numeric = (up - down) / (2.0 * options.eps);
            if (options.skip_kinks) {
                const double mid = eval_at(0.0);
                const double fwd = (up - mid) / options.eps;
                const double bwd = (mid - down) / options.eps;
                if (std::abs(fwd - bwd) > options.kink_tolerance * std::max(1.0, std::abs(numeric))) {
                    ++report.skipped;
                    continue;
                }
            }
            const double a = analytic[k][i];
            report.max_error = std::max(report.max_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
            ++report.checked;
        }
    }
    return report;
}

double grad_check(const ScalarFn& f, std::span<const Tensor> inputs, const GradCheckOptions& options) {
    return grad_check_report(f, inputs, options).max_error;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    GradCheckOptions options;
    options.eps = eps;
    return grad_check([&](std::span<const Tensor> in) { return f(in[0]); }, std::span<const Tensor>(&x, 1), options);
}

} // namespace msvdd::nd
