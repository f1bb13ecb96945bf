#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msvdd::eval {

// delta = D + w * (mu_d / mu_rec) * rec. Throws ContractError when mu_rec <= 0.
double anomaly_score(double distance, double rec, double mu_d, double mu_rec, double w);

struct ScoredWindow {
    std::string id;
    double distance = 0.0;
    double rec = 0.0;
    double delta = 0.0;
    std::optional<bool> label;  // true = anomaly
    bool predicted = false;
};

// delta > delta_star; ties are normal.
std::vector<bool> classify(std::span<const double> deltas, double delta_star);
void classify(std::vector<ScoredWindow>& scored, double delta_star);

struct Prf1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Set when the corresponding denominator was zero and the value defaulted to 0.
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Prf1 prf1(const std::vector<bool>& predictions, const std::vector<bool>& labels);

struct RocPoint {
    double fpr;
    double tpr;
    double threshold;  // predicted positive when score >= threshold
};

struct Roc {
    std::vector<RocPoint> curve;  // from (0, 0) at +inf to (1, 1)
    double auc = 0.0;
};

// Trapezoid rule over the sweep of unique scores. Requires both classes.
Roc roc_auc(std::span<const double> scores, const std::vector<bool>& labels);

struct BestF1 {
    double threshold;  // predicted positive when score > threshold
    double f1;
};

// Maximizes F1 over -inf, midpoints between consecutive unique scores, and +inf.
// Ties go to the smallest threshold. Requires at least one positive label.
BestF1 best_f1_threshold(std::span<const double> scores, const std::vector<bool>& labels);

// Inclusive index range [begin, end].
struct Segment {
    std::size_t begin;
    std::size_t end;
    bool operator==(const Segment&) const = default;
};

// Maximal runs of positive labels.
std::vector<Segment> label_segments(const std::vector<bool>& labels);

// Any hit inside a segment marks the whole segment positive. Segments must be
// sorted, disjoint, non-empty, and inside the sequence; otherwise ContractError.
std::vector<bool> point_adjust(const std::vector<bool>& predictions, const std::vector<bool>& labels,
                               std::span<const Segment> segments);
std::vector<bool> point_adjust(const std::vector<bool>& predictions, const std::vector<bool>& labels);

// Shortest decimal that round-trips.
std::string format_double(double v);

// CSV header: id,D,rec,delta,label,predicted. Labels are 0/1 or empty.
void write_scores_csv(std::ostream& out, std::span<const ScoredWindow> rows);
std::vector<ScoredWindow> read_scores_csv(std::istream& in);

// CSV header: fpr,tpr,threshold
void write_roc_csv(std::ostream& out, const Roc& roc);

} // namespace msvdd::eval
