#include <algorithm>
#include <cmath>
#include <numeric>

#include "msvdd/errors.hpp"
#include "msvdd/scoring.hpp"

namespace msvdd::eval {

double anomaly_score(double distance, double rec, double mu_d, double mu_rec, double w) {
    if (!(mu_rec > 0.0)) {
        throw ContractError("anomaly_score: mu_rec must be positive (degenerate training set), got " +
                            format_double(mu_rec));
    }
    return distance + w * (mu_d / mu_rec) * rec;
}

std::vector<bool> classify(std::span<const double> deltas, double delta_star) {
    std::vector<bool> out(deltas.size());
    for (std::size_t i = 0; i < deltas.size(); ++i) out[i] = deltas[i] > delta_star;
    return out;
}

void classify(std::vector<ScoredWindow>& scored, double delta_star) {
    for (auto& s : scored) s.predicted = s.delta > delta_star;
}

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ContractError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

Prf1 from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
    Prf1 m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.tn = tn;
    if (tp + fp == 0) {
        m.precision_undefined = true;
    } else {
        m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (tp + fn == 0) {
        m.recall_undefined = true;
    } else {
        m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    }
    if (m.precision + m.recall == 0.0) {
        m.f1_undefined = true;
    } else {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

std::size_t count_true(const std::vector<bool>& v) { return static_cast<std::size_t>(std::count(v.begin(), v.end(), true)); }

// Indices sorted by descending score, ties in index order.
std::vector<std::size_t> descending(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

void require_finite(std::span<const double> scores, const char* what) {
    for (double s : scores) {
        if (std::isnan(s)) throw ContractError(std::string(what) + ": NaN score");
    }
}

} // namespace

Prf1 prf1(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
    require_same_length(predictions.size(), labels.size(), "prf1");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i]) {
            (labels[i] ? tp : fp) += 1;
        } else {
            (labels[i] ? fn : tn) += 1;
        }
    }
    return from_counts(tp, fp, fn, tn);
}

Roc roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
    require_same_length(scores.size(), labels.size(), "roc_auc");
    require_finite(scores, "roc_auc");
    const std::size_t pos = count_true(labels), neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw ContractError("roc_auc: labels contain a single class");

    Roc roc;
    roc.curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    const auto order = descending(scores);
    std::size_t tp = 0, fp = 0;
    // Twice the trapezoid area in units of one (positive, negative) pair.
    unsigned long long area2 = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double t = scores[order[k]];
        const std::size_t tp0 = tp, fp0 = fp;
        for (; k < order.size() && scores[order[k]] == t; ++k) (labels[order[k]] ? tp : fp) += 1;
        area2 += static_cast<unsigned long long>(fp - fp0) * (tp + tp0);
        roc.curve.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                             static_cast<double>(tp) / static_cast<double>(pos), t});
    }
    roc.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
    return roc;
}

BestF1 best_f1_threshold(std::span<const double> scores, const std::vector<bool>& labels) {
    require_same_length(scores.size(), labels.size(), "best_f1_threshold");
    require_finite(scores, "best_f1_threshold");
    const std::size_t pos = count_true(labels), neg = labels.size() - pos;
    if (pos == 0) throw ContractError("best_f1_threshold: no positive labels");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Threshold -inf: everything positive. Raising it past each unique score
    // turns that group negative.
    std::size_t tp = pos, fp = neg;
    BestF1 best{-std::numeric_limits<double>::infinity(), from_counts(tp, fp, 0, 0).f1};
    for (std::size_t k = 0; k < order.size();) {
        const double t = scores[order[k]];
        for (; k < order.size() && scores[order[k]] == t; ++k) (labels[order[k]] ? tp : fp) -= 1;
        const double threshold =
            k < order.size() ? std::midpoint(t, scores[order[k]]) : std::numeric_limits<double>::infinity();
        const double f1 = from_counts(tp, fp, pos - tp, neg - fp).f1;
        if (f1 > best.f1) best = {threshold, f1};
    }
    return best;
}

std::vector<Segment> label_segments(const std::vector<bool>& labels) {
    std::vector<Segment> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        std::size_t j = i;
        while (j + 1 < labels.size() && labels[j + 1]) ++j;
        out.push_back({i, j});
        i = j;
    }
    return out;
}

std::vector<bool> point_adjust(const std::vector<bool>& predictions, const std::vector<bool>& labels,
                               std::span<const Segment> segments) {
    require_same_length(predictions.size(), labels.size(), "point_adjust");
    for (std::size_t k = 0; k < segments.size(); ++k) {
        const auto& s = segments[k];
        if (s.begin > s.end || s.end >= labels.size()) {
            throw ContractError("point_adjust: segment [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                                "] invalid for " + std::to_string(labels.size()) + " points");
        }
        if (k > 0 && s.begin <= segments[k - 1].end) {
            throw ContractError("point_adjust: segments unsorted or overlapping at index " + std::to_string(k));
        }
    }
    std::vector<bool> out = predictions;
    for (const auto& s : segments) {
        bool hit = false;
        for (std::size_t i = s.begin; i <= s.end; ++i) hit = hit || predictions[i];
        if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(s.begin),
                           out.begin() + static_cast<std::ptrdiff_t>(s.end + 1), true);
    }
    return out;
}

std::vector<bool> point_adjust(const std::vector<bool>& predictions, const std::vector<bool>& labels) {
    auto segments = label_segments(labels);
    return point_adjust(predictions, labels, segments);
}

} // namespace msvdd::eval
