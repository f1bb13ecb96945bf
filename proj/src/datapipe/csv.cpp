#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "msvdd/datapipe.hpp"
#include "msvdd/errors.hpp"

namespace msvdd::data {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    std::string available;
    for (const auto& h : header) available += (available.empty() ? "" : ", ") + h;
    throw FormatError("csv: column '" + name + "' not found; available columns: " + available);
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (cell.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
        throw ParseError("csv row " + std::to_string(row) + ", column '" + column + "': not a finite number: '" + cell +
                         "'");
    }
    return v;
}

} // namespace

TimeSeries parse_csv_timeseries(std::istream& in, const std::string& column, const std::string& time_column) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: missing header row");
    const auto header = split_cells(line);
    const std::size_t col = find_column(header, column);
    const bool timed = !time_column.empty();
    const std::size_t tcol = timed ? find_column(header, time_column) : 0;

    TimeSeries out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split_cells(line);
        if (cells.size() != header.size()) {
            throw ParseError("csv row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(cells.size()));
        }
        out.values.push_back(parse_cell(cells[col], row, column));
        if (timed) {
            const double t = parse_cell(cells[tcol], row, time_column);
            if (!out.time.empty() && !(t > out.time.back())) {
                throw FormatError("csv row " + std::to_string(row) + ": timestamps not strictly increasing (" +
                                  cells[tcol] + " after previous)");
            }
            out.time.push_back(t);
        }
    }
    return out;
}

TimeSeries load_csv_timeseries(const fs::path& path, const std::string& column, const std::string& time_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return parse_csv_timeseries(in, column, time_column);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace msvdd::data
