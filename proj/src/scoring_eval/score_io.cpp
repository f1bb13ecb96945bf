#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "msvdd/errors.hpp"
#include "msvdd/scoring.hpp"

namespace msvdd::eval {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

constexpr const char* kScoresHeader = "id,D,rec,delta,label,predicted";

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& cell, std::size_t row, const char* column) {
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    auto res = std::from_chars(cell.data(), end, v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != end) {
        throw ParseError("scores csv row " + std::to_string(row) + ": column " + column + " is not a number: '" + cell +
                         "'");
    }
    return v;
}

bool parse_flag(const std::string& cell, std::size_t row, const char* column) {
    if (cell == "0") return false;
    if (cell == "1") return true;
    throw ParseError("scores csv row " + std::to_string(row) + ": column " + column + " must be 0 or 1, got '" + cell +
                     "'");
}

} // namespace

void write_scores_csv(std::ostream& out, std::span<const ScoredWindow> rows) {
    out << kScoresHeader << '\n';
    for (const auto& r : rows) {
        if (r.id.find_first_of(",\n\r") != std::string::npos) {
            throw ContractError("scores csv: window id '" + r.id + "' contains a separator");
        }
        out << r.id << ',' << format_double(r.distance) << ',' << format_double(r.rec) << ',' << format_double(r.delta)
            << ',' << (r.label ? (*r.label ? "1" : "0") : "") << ',' << (r.predicted ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("scores csv: write failed");
}

std::vector<ScoredWindow> read_scores_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("scores csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kScoresHeader) throw FormatError("scores csv: expected header '" + std::string(kScoresHeader) + "'");

    std::vector<ScoredWindow> rows;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != 6) {
            throw ParseError("scores csv row " + std::to_string(row) + ": expected 6 fields, got " +
                             std::to_string(cells.size()));
        }
        ScoredWindow w;
        w.id = cells[0];
        w.distance = parse_number(cells[1], row, "D");
        w.rec = parse_number(cells[2], row, "rec");
        w.delta = parse_number(cells[3], row, "delta");
        if (!cells[4].empty()) w.label = parse_flag(cells[4], row, "label");
        w.predicted = parse_flag(cells[5], row, "predicted");
        rows.push_back(std::move(w));
    }
    return rows;
}

void write_roc_csv(std::ostream& out, const Roc& roc) {
    out << "fpr,tpr,threshold\n";
    for (const auto& p : roc.curve) {
        out << format_double(p.fpr) << ',' << format_double(p.tpr) << ',' << format_double(p.threshold) << '\n';
    }
    if (!out) throw IoError("roc csv: write failed");
}

} // namespace msvdd::eval
