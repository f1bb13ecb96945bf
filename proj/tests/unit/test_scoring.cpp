#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "msvdd/errors.hpp"
#include "msvdd/rng.hpp"
#include "msvdd/scoring.hpp"

using namespace msvdd;
using namespace msvdd::eval;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double oracle_auc(const std::vector<double>& s, const std::vector<bool>& y) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (!y[i] || y[j]) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

Counts count(const std::vector<bool>& pred, const std::vector<bool>& y) {
    Counts c;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (pred[i] && y[i]) ++c.tp;
        if (pred[i] && !y[i]) ++c.fp;
        if (!pred[i] && y[i]) ++c.fn;
    }
    return c;
}

double oracle_f1(const Counts& c) {
    const double p = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    const double r = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double oracle_best_f1(const std::vector<double>& s, const std::vector<bool>& y) {
    std::vector<double> thresholds{-kInf, kInf};
    thresholds.insert(thresholds.end(), s.begin(), s.end());
    double best = 0.0;
    for (double t : thresholds) {
        std::vector<bool> pred(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) pred[i] = s[i] > t;
        best = std::max(best, oracle_f1(count(pred, y)));
    }
    return best;
}

std::vector<bool> oracle_point_adjust(const std::vector<bool>& pred, const std::vector<bool>& y) {
    std::vector<bool> out = pred;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!y[i]) continue;
        std::size_t lo = i, hi = i;
        while (lo > 0 && y[lo - 1]) --lo;
        while (hi + 1 < y.size() && y[hi + 1]) ++hi;
        for (std::size_t k = lo; k <= hi; ++k) {
            if (pred[k]) out[i] = true;
        }
    }
    return out;
}

std::vector<bool> bits(unsigned mask, std::size_t n) {
    std::vector<bool> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (mask >> i) & 1u;
    return v;
}

} // namespace

TEST_CASE("anomaly_score examples") {
    CHECK(anomaly_score(3.0, 7.0, 1.0, 0.5, 0.0) == 3.0);
    CHECK(anomaly_score(2.0, 0.5, 1.0, 0.25, 0.01) == doctest::Approx(2.02).epsilon(1e-15));
    CHECK(anomaly_score(1.7, 0.3, 1.7, 0.3, 0.01) == doctest::Approx(1.7 * 1.01).epsilon(1e-15));
    CHECK_THROWS_AS(anomaly_score(1.0, 1.0, 1.0, 0.0, 0.01), ContractError);

    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const double d = rng.uniform(0.0, 5.0), r = rng.uniform(0.0, 2.0), bump = rng.uniform(1e-6, 1.0);
        CHECK(anomaly_score(d + bump, r, 1.3, 0.2, 0.01) > anomaly_score(d, r, 1.3, 0.2, 0.01));
        CHECK(anomaly_score(d, r + bump, 1.3, 0.2, 0.01) > anomaly_score(d, r, 1.3, 0.2, 0.01));
    }
}

TEST_CASE("classify uses a strict inequality") {
    std::vector<double> deltas{1.0, 1.0 + 1e-12, 0.5};
    auto p = classify(deltas, 1.0);
    CHECK(p == std::vector<bool>{false, true, false});
    CHECK(classify(std::vector<double>{}, 1.0).empty());

    std::vector<ScoredWindow> rows(2);
    rows[0].delta = 2.0;
    rows[1].delta = 2.5;
    classify(rows, 2.0);
    CHECK_FALSE(rows[0].predicted);
    CHECK(rows[1].predicted);
}

TEST_CASE("prf1 examples") {
    // TP=3, FP=1, FN=1
    auto m = prf1({true, true, true, true, false, false}, {true, true, true, false, true, false});
    CHECK(m.precision == 0.75);
    CHECK(m.recall == 0.75);
    CHECK(m.f1 == 0.75);

    auto perfect = prf1({true, false, true}, {true, false, true});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    auto none = prf1({false, false, false}, {true, false, true});
    CHECK(none.precision == 0.0);
    CHECK(none.precision_undefined);
    CHECK(none.recall == 0.0);
    CHECK_FALSE(none.recall_undefined);
    CHECK(none.f1 == 0.0);

    CHECK_THROWS_AS(prf1({true}, {true, false}), ContractError);
}

TEST_CASE("prf1 matches enumeration on every fixture up to 5 points") {
    for (std::size_t n = 1; n <= 5; ++n) {
        for (unsigned pm = 0; pm < (1u << n); ++pm) {
            for (unsigned lm = 0; lm < (1u << n); ++lm) {
                auto pred = bits(pm, n), y = bits(lm, n);
                auto m = prf1(pred, y);
                auto c = count(pred, y);
                CHECK(m.tp == c.tp);
                CHECK(m.fp == c.fp);
                CHECK(m.fn == c.fn);
                CHECK(m.tp + m.fp + m.fn + m.tn == n);
                CHECK(m.f1 == oracle_f1(c));
                if (c.tp + c.fp + c.fn > 0) {
                    CHECK(m.f1 == doctest::Approx(2.0 * c.tp / double(2 * c.tp + c.fp + c.fn)).epsilon(1e-15));
                }
            }
        }
    }
}

TEST_CASE("roc_auc examples") {
    CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, {false, false, true, true}).auc == 1.0);
    CHECK(roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, {false, true, true, false}).auc == 0.5);
    // Both anomalies outrank both normals.
    CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, {false, true, false, true}).auc == 1.0);
    // 0.35 (anomaly) loses to 0.4 (normal): 3 of 4 pairs ordered.
    auto roc = roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, {false, false, true, true});
    CHECK(roc.auc == 0.75);
    CHECK(roc.curve.front().fpr == 0.0);
    CHECK(roc.curve.front().tpr == 0.0);
    CHECK(roc.curve.back().fpr == 1.0);
    CHECK(roc.curve.back().tpr == 1.0);
    CHECK(roc.curve.size() == 5);

    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, {true, true}), ContractError);
    CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1}, {true, false}), ContractError);
}

TEST_CASE("roc_auc and best_f1 match brute force on random fixtures") {
    Rng rng(99);
    int fixtures = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        const std::size_t n = 2 + rng.index(9);
        std::vector<double> s(n);
        // Few distinct values so ties are common.
        for (auto& v : s) v = static_cast<double>(rng.index(5)) * 0.25 - 0.3;
        auto y = bits(static_cast<unsigned>(rng.index(1u << n)), n);
        const auto pos = std::count(y.begin(), y.end(), true);
        if (pos == 0) {
            CHECK_THROWS_AS(best_f1_threshold(s, y), ContractError);
            continue;
        }
        auto best = best_f1_threshold(s, y);
        CHECK(best.f1 == oracle_best_f1(s, y));
        CHECK(prf1(classify(s, best.threshold), y).f1 == best.f1);
        if (pos == static_cast<long>(n)) continue;
        CHECK(roc_auc(s, y).auc == oracle_auc(s, y));
        ++fixtures;
    }
    CHECK(fixtures > 2000);
}

TEST_CASE("auc is invariant under increasing transforms") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(10), t(10);
        std::vector<bool> y(10);
        for (std::size_t i = 0; i < 10; ++i) {
            s[i] = rng.uniform(-2.0, 2.0);
            t[i] = std::exp(3.0 * s[i]) + 7.0;
            y[i] = i % 3 == 0;
        }
        CHECK(roc_auc(s, y).auc == roc_auc(t, y).auc);
    }
}

TEST_CASE("best_f1 examples") {
    auto sep = best_f1_threshold(std::vector<double>{0.1, 0.2, 0.8, 0.9}, {false, false, true, true});
    CHECK(sep.f1 == 1.0);
    CHECK(sep.threshold > 0.2);
    CHECK(sep.threshold < 0.8);

    auto all = best_f1_threshold(std::vector<double>{0.5, 0.1, 0.9}, {true, true, true});
    CHECK(all.f1 == 1.0);
    CHECK(all.threshold == -kInf);

    // Candidates -inf, 0.225, 0.375, 0.6, +inf give F1 2/3, 0.8, 2/3, 2/3, 0.
    auto ex = best_f1_threshold(std::vector<double>{0.1, 0.4, 0.35, 0.8}, {false, false, true, true});
    CHECK(ex.f1 == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(ex.threshold == doctest::Approx(0.225).epsilon(1e-15));
    auto sep2 = best_f1_threshold(std::vector<double>{0.1, 0.4, 0.35, 0.8}, {false, true, false, true});
    CHECK(sep2.f1 == 1.0);
    CHECK(sep2.threshold == doctest::Approx(0.375).epsilon(1e-15));

    // Best F1 is at least the F1 at any fixed threshold.
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(10);
        std::vector<bool> y(10);
        for (std::size_t i = 0; i < 10; ++i) {
            s[i] = rng.uniform();
            y[i] = rng.uniform() < 0.4;
        }
        y[0] = true;
        const double t = rng.uniform();
        CHECK(best_f1_threshold(s, y).f1 >= prf1(classify(s, t), y).f1);
    }
}

TEST_CASE("point_adjust examples") {
    std::vector<bool> y{false, false, false, true, true, true, true, false, false};
    std::vector<bool> p(9, false);
    p[4] = true;
    p[8] = true;
    std::vector<Segment> seg{{3, 6}};
    auto adj = point_adjust(p, y, seg);
    CHECK(adj == std::vector<bool>{false, false, false, true, true, true, true, false, true});

    std::vector<bool> miss(9, false);
    CHECK(point_adjust(miss, y, seg) == miss);

    std::vector<Segment> overlap{{1, 3}, {3, 5}};
    CHECK_THROWS_AS(point_adjust(p, y, overlap), ContractError);
    std::vector<Segment> unsorted{{5, 6}, {1, 2}};
    CHECK_THROWS_AS(point_adjust(p, y, unsorted), ContractError);
    std::vector<Segment> outside{{7, 9}};
    CHECK_THROWS_AS(point_adjust(p, y, outside), ContractError);
    std::vector<Segment> reversed{{4, 3}};
    CHECK_THROWS_AS(point_adjust(p, y, reversed), ContractError);

    CHECK(label_segments(y) == std::vector<Segment>{{3, 6}});
    CHECK(label_segments({true, false, true, true}) == std::vector<Segment>{{0, 0}, {2, 3}});
}

TEST_CASE("point_adjust matches enumeration and never lowers recall") {
    for (std::size_t n = 1; n <= 7; ++n) {
        for (unsigned pm = 0; pm < (1u << n); ++pm) {
            for (unsigned lm = 0; lm < (1u << n); ++lm) {
                auto pred = bits(pm, n), y = bits(lm, n);
                auto adj = point_adjust(pred, y);
                CHECK(adj == oracle_point_adjust(pred, y));
                CHECK(prf1(adj, y).recall >= prf1(pred, y).recall);
                for (std::size_t i = 0; i < n; ++i) {
                    if (!y[i]) CHECK(adj[i] == pred[i]);
                }
            }
        }
    }
}

TEST_CASE("scores csv round trip") {
    std::vector<ScoredWindow> rows(3);
    rows[0] = {"w0", 1.0 / 3.0, 0.25, 1.5e-7, true, true};
    rows[1] = {"w1", 2.0, 1e300, 0.0, false, false};
    rows[2] = {"w2", 0.1, 0.2, 0.3, std::nullopt, false};
    std::stringstream ss;
    write_scores_csv(ss, rows);
    auto back = read_scores_csv(ss);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].id == rows[i].id);
        CHECK(back[i].distance == rows[i].distance);
        CHECK(back[i].rec == rows[i].rec);
        CHECK(back[i].delta == rows[i].delta);
        CHECK(back[i].label == rows[i].label);
        CHECK(back[i].predicted == rows[i].predicted);
    }

    std::stringstream header_only("id,D,rec,delta,label,predicted\n");
    CHECK(read_scores_csv(header_only).empty());

    std::stringstream bad("id,D,rec,delta,label,predicted\nw0,1,2,3,1,1\nw1,1,x,3,0,0\n");
    try {
        read_scores_csv(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
    std::stringstream wrong("a,b\n");
    CHECK_THROWS_AS(read_scores_csv(wrong), FormatError);
}

TEST_CASE("format_double round trips") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-20.0, 20.0));
        CHECK(std::stod(format_double(v)) == v);
    }
}
