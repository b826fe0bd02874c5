#pragma once

// CSV emission and parsing. Numbers use the shortest decimal form that reads
// back to the same double.

#include <charconv>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mlsmc/bench.hpp"
#include "mlsmc/bounds.hpp"
#include "mlsmc/filter.hpp"
#include "mlsmc/model.hpp"
#include "mlsmc/pmcmc.hpp"
#include "mlsmc/simulate.hpp"

namespace mlsmc::io {

inline std::string format_double(double x) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
    double x = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw std::invalid_argument("not a number: '" + std::string(s) + "'");
    return x;
}

inline std::uint64_t parse_u64(std::string_view s) {
    std::uint64_t x = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw std::invalid_argument("not an unsigned integer: '" + std::string(s) + "'");
    return x;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Reads a header line and checks it against `expected` (a prefix for chains).
inline std::vector<std::string> read_header(std::istream& is, const std::vector<std::string>& expected) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("csv: missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split(line);
    if (header.size() < expected.size()) throw std::runtime_error("csv: header has too few columns");
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (header[i] != expected[i]) throw std::runtime_error("csv: expected column '" + expected[i] + "', got '" + header[i] + "'");
    return header;
}

/// Calls `row(fields, line_number)` for every data row.
template <class Row>
void for_each_row(std::istream& is, std::size_t columns, Row&& row) {
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line);
        if (fields.size() != columns)
            throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                                     " fields, got " + std::to_string(fields.size()));
        row(fields, line_no);
    }
}

inline const std::vector<std::string> kTraceColumns{"k", "t_ms", "v_true", "n_true", "gE_true", "gI_true", "i_app", "y"};
inline const std::vector<std::string> kFilterColumns{"k", "t_ms", "v_hat", "n_hat", "gE_hat", "gI_hat", "ess", "log_pred"};
inline const std::vector<std::string> kChainColumns{"j", "accepted", "energy"};
inline const std::vector<std::string> kPcrbColumns{"k", "t_ms", "bound_v", "bound_n"};

inline void write_header(std::ostream& os, const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
}

template <int D>
void write_trace(std::ostream& os, const Trace<D>& trace) {
    write_header(os, kTraceColumns);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const std::size_t k = i + 1;
        const Vector<D>& x = trace.states[i];
        os << k << ',' << format_double(static_cast<double>(k) * trace.t_s) << ',' << format_double(x[kV]) << ','
           << format_double(x[kN]) << ',';
        if constexpr (D == 4) os << format_double(x[kGe]) << ',' << format_double(x[kGi]);
        else os << ',';
        os << ',' << format_double(trace.applied_current[i]) << ',';
        if (trace.has_observations()) os << format_double(trace.observations[i]);
        os << "\n";
    }
}

/// Parses a trace written by write_trace. Sampling period comes from the
/// t_ms column of the first row; seeds and sigma_y are not part of the file.
template <int D>
Trace<D> read_trace(std::istream& is) {
    read_header(is, kTraceColumns);
    Trace<D> trace;
    bool observed = true;
    for_each_row(is, kTraceColumns.size(), [&](const std::vector<std::string>& f, std::size_t line) {
        const std::size_t k = parse_u64(f[0]);
        if (k != trace.size() + 1) throw std::runtime_error("trace csv line " + std::to_string(line) + ": k out of sequence");
        if (k == 1) trace.t_s = parse_double(f[1]);
        Vector<D> x;
        x[kV] = parse_double(f[2]);
        x[kN] = parse_double(f[3]);
        if constexpr (D == 4) {
            x[kGe] = parse_double(f[4]);
            x[kGi] = parse_double(f[5]);
        } else if (!f[4].empty() || !f[5].empty()) {
            throw std::runtime_error("trace csv line " + std::to_string(line) + ": conductances in a 2-state trace");
        }
        trace.states.push_back(x);
        trace.applied_current.push_back(parse_double(f[6]));
        if (f[7].empty()) observed = false;
        else trace.observations.push_back(parse_double(f[7]));
    });
    if (trace.states.empty()) throw std::runtime_error("trace csv: no rows");
    if (!observed) trace.observations.clear();
    return trace;
}

template <int D>
void write_filter(std::ostream& os, const FilterOutput<D>& out, double t_s) {
    write_header(os, kFilterColumns);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t k = i + 1;
        const Vector<D>& x = out.estimates[i];
        os << k << ',' << format_double(static_cast<double>(k) * t_s) << ',' << format_double(x[kV]) << ','
           << format_double(x[kN]) << ',';
        if constexpr (D == 4) os << format_double(x[kGe]) << ',' << format_double(x[kGi]);
        else os << ',';
        os << ',' << format_double(out.ess[i]) << ',' << format_double(out.log_predictive[i]) << "\n";
    }
}

template <int D>
FilterOutput<D> read_filter(std::istream& is) {
    read_header(is, kFilterColumns);
    FilterOutput<D> out;
    for_each_row(is, kFilterColumns.size(), [&](const std::vector<std::string>& f, std::size_t) {
        Vector<D> x;
        x[kV] = parse_double(f[2]);
        x[kN] = parse_double(f[3]);
        if constexpr (D == 4) {
            x[kGe] = parse_double(f[4]);
            x[kGi] = parse_double(f[5]);
        }
        out.estimates.push_back(x);
        out.ess.push_back(parse_double(f[6]));
        out.log_predictive.push_back(parse_double(f[7]));
    });
    return out;
}

inline void write_chain(std::ostream& os, const Chain& chain) {
    std::vector<std::string> cols = kChainColumns;
    cols.insert(cols.end(), chain.names.begin(), chain.names.end());
    write_header(os, cols);
    for (std::size_t j = 0; j < chain.size(); ++j) {
        os << j + 1 << ',' << (chain.accepts[j] ? 1 : 0) << ',' << format_double(chain.energies[j]);
        for (Eigen::Index i = 0; i < chain.samples[j].size(); ++i) os << ',' << format_double(chain.samples[j][i]);
        os << "\n";
    }
}

/// Reads samples, energies, acceptance flags and names; the adaptation state
/// is not stored in the file.
inline Chain read_chain(std::istream& is) {
    const auto header = read_header(is, kChainColumns);
    Chain chain;
    chain.names.assign(header.begin() + static_cast<std::ptrdiff_t>(kChainColumns.size()), header.end());
    const auto dim = static_cast<Eigen::Index>(chain.names.size());
    for_each_row(is, header.size(), [&](const std::vector<std::string>& f, std::size_t line) {
        if (parse_u64(f[0]) != chain.size() + 1)
            throw std::runtime_error("chain csv line " + std::to_string(line) + ": j out of sequence");
        if (f[1] != "0" && f[1] != "1")
            throw std::runtime_error("chain csv line " + std::to_string(line) + ": accepted must be 0 or 1");
        chain.accepts.push_back(f[1] == "1");
        chain.energies.push_back(parse_double(f[2]));
        DynVector theta(dim);
        for (Eigen::Index i = 0; i < dim; ++i) theta[i] = parse_double(f[3 + static_cast<std::size_t>(i)]);
        chain.samples.push_back(std::move(theta));
    });
    return chain;
}

inline void write_pcrb(std::ostream& os, const PcrbSeries& series) {
    write_header(os, kPcrbColumns);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::size_t k = i + 1;
        os << k << ',' << format_double(static_cast<double>(k) * series.t_s) << ',' << format_double(series.bound_v[i])
           << ',' << format_double(series.bound_n[i]) << "\n";
    }
}

/// Per-step RMSE of every particle count, long format, with the bound when
/// the report has one.
inline void write_rmse(std::ostream& os, const ExperimentReport& report) {
    write_header(os, {"k", "t_ms", "particles", "rmse_v", "rmse_n", "rmse_gE", "rmse_gI", "pcrb_v", "pcrb_n"});
    for (const auto& r : report.counts) {
        const std::size_t steps = r.rmse.front().size();
        for (std::size_t i = 0; i < steps; ++i) {
            const std::size_t k = i + 1;
            os << k << ',' << format_double(static_cast<double>(k) * report.t_s) << ',' << r.particles;
            for (int c = 0; c < 4; ++c) {
                os << ',';
                if (c < report.dim) os << format_double(r.rmse[static_cast<std::size_t>(c)][i]);
            }
            os << ',';
            if (report.pcrb) os << format_double(report.pcrb->bound_v[i]);
            os << ',';
            if (report.pcrb) os << format_double(report.pcrb->bound_n[i]);
            os << "\n";
        }
    }
}

}  // namespace mlsmc::io
