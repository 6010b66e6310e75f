#pragma once

// Data model for 2x2 diagnostic tables: CSV ingestion, per-study empirical
// accuracy with optional continuity correction, real-line transforms with
// delta-method variances, and closed-form prevalence estimates.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "links.hpp"

namespace diagmeta {

class parse_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class validation_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class dataset_too_small : public validation_error {
    using validation_error::validation_error;
};

// Continuity correction for empirical estimates: `half_cell` adds 0.5 to all
// four cells of a study whenever any cell is zero.
enum class Correction { none, half_cell };

inline const char* correction_name(Correction c) {
    return c == Correction::none ? "none" : "half-cell";
}

inline Correction correction_from_name(const std::string& name) {
    if (name == "none") return Correction::none;
    if (name == "half-cell" || name == "half_cell") return Correction::half_cell;
    throw std::invalid_argument("unknown correction policy: " + name);
}

// One study's 2x2 table. Margins are derived from the four cells:
// P = tp + fn diseased, N = fp + tn nondiseased.
struct StudyRecord {
    std::string id;
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;

    long long positives() const { return tp + fn; }
    long long negatives() const { return fp + tn; }
    long long total() const { return positives() + negatives(); }

    void validate() const {
        if (tp < 0 || fp < 0 || fn < 0 || tn < 0) {
            throw validation_error("study '" + id + "': negative cell count");
        }
        if (positives() < 1 || negatives() < 1) {
            throw validation_error("study '" + id +
                                   "': each study needs at least one diseased and one "
                                   "nondiseased subject");
        }
    }
};

struct MetaDataset {
    std::vector<StudyRecord> studies;

    std::size_t size() const { return studies.size(); }

    void validate() const {
        if (studies.size() < 2) {
            throw dataset_too_small("dataset too small: at least two studies are required");
        }
        std::unordered_set<std::string> seen;
        for (const auto& s : studies) {
            s.validate();
            if (!seen.insert(s.id).second) {
                throw validation_error("duplicate study id '" + s.id + "'");
            }
        }
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline long long parse_count(const std::string& cell, std::size_t row, const std::string& col) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(cell, &pos);
    } catch (const std::exception&) {
        throw parse_error("row " + std::to_string(row) + ": column '" + col +
                          "' is not an integer: '" + cell + "'");
    }
    if (pos != cell.size()) {
        throw parse_error("row " + std::to_string(row) + ": column '" + col +
                          "' is not an integer: '" + cell + "'");
    }
    if (v < 0) {
        throw validation_error("row " + std::to_string(row) + ": column '" + col +
                               "' is negative");
    }
    return v;
}

}  // namespace detail

// Parses CSV content with header `study,tp,fp,fn,tn`. Columns are matched by
// header name, not position. Throws parse_error (with the offending row
// number), validation_error, or dataset_too_small.
inline MetaDataset parse_dataset(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    std::size_t row = 0;

    std::unordered_map<std::string, std::size_t> columns;
    while (std::getline(ss, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        auto header = detail::split_csv_line(line);
        for (std::size_t j = 0; j < header.size(); ++j) {
            std::string name = header[j];
            std::transform(name.begin(), name.end(), name.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (!columns.emplace(name, j).second) {
                throw parse_error("duplicate header column '" + name + "'");
            }
        }
        break;
    }
    const char* required[] = {"study", "tp", "fp", "fn", "tn"};
    if (columns.size() != 5) {
        throw parse_error("header must contain exactly the columns study,tp,fp,fn,tn");
    }
    for (const char* name : required) {
        if (columns.find(name) == columns.end()) {
            throw parse_error(std::string("missing required column '") + name + "'");
        }
    }

    MetaDataset ds;
    while (std::getline(ss, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != 5) {
            throw parse_error("row " + std::to_string(row) + ": expected 5 cells, got " +
                              std::to_string(cells.size()));
        }
        StudyRecord s;
        s.id = cells[columns["study"]];
        if (s.id.empty()) {
            throw parse_error("row " + std::to_string(row) + ": empty study id");
        }
        s.tp = detail::parse_count(cells[columns["tp"]], row, "tp");
        s.fp = detail::parse_count(cells[columns["fp"]], row, "fp");
        s.fn = detail::parse_count(cells[columns["fn"]], row, "fn");
        s.tn = detail::parse_count(cells[columns["tn"]], row, "tn");
        ds.studies.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

inline std::string serialize_dataset(const MetaDataset& ds) {
    std::string out = "study,tp,fp,fn,tn\n";
    for (const auto& s : ds.studies) {
        out += s.id + ',' + std::to_string(s.tp) + ',' + std::to_string(s.fp) + ',' +
               std::to_string(s.fn) + ',' + std::to_string(s.tn) + '\n';
    }
    return out;
}

// The four cells as doubles after applying the correction policy.
// `corrected` reports whether the study had a zero cell.
struct CorrectedCounts {
    double tp, fp, fn, tn;
    bool corrected;

    double positives() const { return tp + fn; }
    double negatives() const { return fp + tn; }
};

inline CorrectedCounts corrected_counts(const StudyRecord& s, Correction policy) {
    s.validate();
    const bool zero_cell = (s.tp == 0 || s.fp == 0 || s.fn == 0 || s.tn == 0);
    const double add = (policy == Correction::half_cell && zero_cell) ? 0.5 : 0.0;
    return {s.tp + add, s.fp + add, s.fn + add, s.tn + add,
            policy == Correction::half_cell && zero_cell};
}

// Empirical sensitivity tp'/P' and specificity tn'/N'. Under `none` a zero
// cell puts the estimate at 0 or 1; this is flagged, not an error.
struct EmpiricalAccuracy {
    double se;
    double sp;
    bool at_boundary;  // se or sp in {0,1}
    bool corrected;    // half-cell correction was applied
};

inline EmpiricalAccuracy empirical_accuracy(const StudyRecord& s, Correction policy) {
    const auto c = corrected_counts(s, policy);
    const double se = c.tp / c.positives();
    const double sp = c.tn / c.negatives();
    return {se, sp, se <= 0.0 || se >= 1.0 || sp <= 0.0 || sp >= 1.0, c.corrected};
}

class nonfinite_transform : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Transformed per-study estimates eta_hat = g(se_hat), xi_hat = g(sp_hat)
// with delta-method variances g'(p)^2 p(1-p)/m. For the logit link the
// variances reduce to 1/tp' + 1/fn' and 1/tn' + 1/fp'.
struct TransformedStudy {
    double eta_hat;
    double xi_hat;
    double var_eta;
    double var_xi;
};

inline TransformedStudy transform_estimates(const StudyRecord& s, Link link,
                                            Correction policy) {
    const auto c = corrected_counts(s, policy);
    const auto acc = empirical_accuracy(s, policy);
    if (acc.at_boundary) {
        throw nonfinite_transform(
            "study '" + s.id +
            "': empirical estimate at 0 or 1 cannot be transformed; use the half-cell "
            "correction");
    }
    const double dse = link_derivative(link, acc.se);
    const double dsp = link_derivative(link, acc.sp);
    return {link_apply(link, acc.se), link_apply(link, acc.sp),
            dse * dse * acc.se * (1.0 - acc.se) / c.positives(),
            dsp * dsp * acc.sp * (1.0 - acc.sp) / c.negatives()};
}

// Closed-form prevalence estimates pi_hat = P/n with binomial standard error
// sqrt(P N / n^3).
struct PrevalenceEstimate {
    double pi_hat;
    double se;
};

inline std::vector<PrevalenceEstimate> estimate_prevalences(const MetaDataset& ds) {
    ds.validate();
    std::vector<PrevalenceEstimate> out;
    out.reserve(ds.size());
    for (const auto& s : ds.studies) {
        const double p = static_cast<double>(s.positives());
        const double n = static_cast<double>(s.negatives());
        const double tot = p + n;
        out.push_back({p / tot, std::sqrt(p * n / (tot * tot * tot))});
    }
    return out;
}

}  // namespace diagmeta
