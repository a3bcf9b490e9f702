#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpdforge/common.hpp"

namespace cpdforge {

// Records over named categorical variables with explicit state spaces.
// Cells are stored as state indices into the per-variable state list.
struct CategoricalTable {
    std::vector<std::string> variables;
    std::vector<std::vector<std::string>> states;  // per variable, sorted lexicographically
    std::vector<int> cells;                        // row-major, n_rows x n_vars
    std::vector<std::string> dropped_variables;    // degenerate columns removed at load time

    std::size_t n_vars() const { return variables.size(); }
    std::size_t n_rows() const { return variables.empty() ? 0 : cells.size() / variables.size(); }
    int cardinality(std::size_t var) const { return static_cast<int>(states[var].size()); }

    int at(std::size_t row, std::size_t var) const { return cells[row * n_vars() + var]; }
    int& at(std::size_t row, std::size_t var) { return cells[row * n_vars() + var]; }

    std::size_t var_index(const std::string& name) const {
        auto it = std::find(variables.begin(), variables.end(), name);
        if (it == variables.end()) throw DataError("unknown variable: " + name);
        return static_cast<std::size_t>(it - variables.begin());
    }

    void validate() const {
        if (!variables.empty() && cells.size() % variables.size() != 0)
            throw DataError("table cell count is not a multiple of the variable count");
        if (states.size() != variables.size())
            throw DataError("state space count does not match variable count");
        for (std::size_t v = 0; v < n_vars(); ++v)
            if (cardinality(v) < 2)
                throw DataError("degenerate variable (fewer than 2 states): " + variables[v]);
        for (std::size_t r = 0; r < n_rows(); ++r)
            for (std::size_t v = 0; v < n_vars(); ++v)
                if (at(r, v) < 0 || at(r, v) >= cardinality(v))
                    throw DataError("state index out of range at row " + std::to_string(r));
    }
};

enum class Encoding { one_hot, integer };

// Column provenance for an encoded matrix: (variable, state) for one-hot
// columns, (variable, -1) for integer columns.
struct ColumnOrigin {
    std::size_t variable;
    int state;
};

struct FeatureMatrix {
    Matrix data;
    std::vector<ColumnOrigin> column_map;
    Encoding encoding = Encoding::one_hot;

    std::size_t n_rows() const { return data.rows; }
    std::size_t n_dims() const { return data.cols; }
};

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (train <= 0 || val <= 0 || test <= 0)
            throw ConfigError("split ratios must all be positive");
        if (std::abs(train + val + test - 1.0) > 1e-12)
            throw ConfigError("split ratios must sum to 1");
    }
};

enum class MissingPolicy { as_state, drop_rows };

struct CsvOptions {
    bool header_row = true;
    std::string missing_sentinel;  // cells equal to this (or empty) are missing
    MissingPolicy missing_policy = MissingPolicy::as_state;
    bool drop_degenerate = false;  // drop <2-state columns instead of erroring
};

namespace detail {

// RFC 4180 field splitting: quoted fields, "" escapes, embedded separators
// and newlines. Returns rows of raw string fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    // strip UTF-8 BOM
    if (text.size() >= 3 && text.compare(0, 3, "\xef\xbb\xbf") == 0) i = 3;
    auto end_field = [&]() {
        row.push_back(field);
        field.clear();
        field_started = false;
    };
    auto end_row = [&]() {
        end_field();
        rows.push_back(row);
        row.clear();
    };
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && !field_started) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            end_row();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) throw DataError("unterminated quoted field");
    if (!field.empty() || !row.empty()) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        end_row();
    }
    return rows;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace detail

inline CategoricalTable table_from_cells(const std::vector<std::string>& header,
                                         std::vector<std::vector<std::string>> cells,
                                         const CsvOptions& opt = {}) {
    const std::size_t n_cols = header.size();
    {
        std::set<std::string> seen(header.begin(), header.end());
        if (seen.size() != n_cols) throw DataError("duplicate column names in header");
    }

    // Resolve missing values first so they participate in state inference.
    std::vector<std::vector<std::string>> kept;
    kept.reserve(cells.size());
    for (auto& row : cells) {
        bool has_missing = false;
        for (auto& cell : row) {
            if (cell.empty() || (!opt.missing_sentinel.empty() && cell == opt.missing_sentinel)) {
                has_missing = true;
                cell = "missing";
            }
        }
        if (has_missing && opt.missing_policy == MissingPolicy::drop_rows) continue;
        kept.push_back(std::move(row));
    }
    if (kept.empty()) throw DataError("no data rows after missing-value handling");

    // State spaces: sorted distinct labels per column.
    std::vector<std::set<std::string>> distinct(n_cols);
    for (const auto& row : kept)
        for (std::size_t c = 0; c < n_cols; ++c) distinct[c].insert(row[c]);

    std::vector<std::size_t> keep_cols;
    CategoricalTable t;
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (distinct[c].size() < 2) {
            if (!opt.drop_degenerate)
                throw DataError("degenerate variable (fewer than 2 distinct values): " + header[c]);
            t.dropped_variables.push_back(header[c]);
            continue;
        }
        keep_cols.push_back(c);
        t.variables.push_back(header[c]);
        t.states.emplace_back(distinct[c].begin(), distinct[c].end());
    }
    if (t.variables.empty()) throw DataError("all columns are degenerate");

    std::vector<std::map<std::string, int>> index(t.n_vars());
    for (std::size_t v = 0; v < t.n_vars(); ++v)
        for (std::size_t s = 0; s < t.states[v].size(); ++s) index[v][t.states[v][s]] = static_cast<int>(s);

    t.cells.reserve(kept.size() * t.n_vars());
    for (const auto& row : kept)
        for (std::size_t v = 0; v < t.n_vars(); ++v) t.cells.push_back(index[v].at(row[keep_cols[v]]));
    t.validate();
    return t;
}

inline CategoricalTable load_csv_text(const std::string& text, const CsvOptions& opt = {}) {
    auto rows = detail::parse_csv(text);
    if (rows.empty()) throw DataError("empty input");

    std::size_t first_data = opt.header_row ? 1 : 0;
    if (rows.size() <= first_data) throw DataError("empty input: no data rows");

    const std::size_t n_cols = rows[0].size();
    for (std::size_t r = 0; r < rows.size(); ++r)
        if (rows[r].size() != n_cols)
            throw DataError("ragged row: line " + std::to_string(r + 1) + " has " +
                            std::to_string(rows[r].size()) + " fields, expected " + std::to_string(n_cols));

    std::vector<std::string> header;
    if (opt.header_row) {
        header = rows[0];
    } else {
        for (std::size_t c = 0; c < n_cols; ++c) header.push_back("var" + std::to_string(c));
    }
    rows.erase(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(first_data));
    return table_from_cells(header, std::move(rows), opt);
}

inline CategoricalTable load_csv(const std::string& path, bool header_row = true, const CsvOptions& base = {}) {
    CsvOptions opt = base;
    opt.header_row = header_row;
    return load_csv_text(read_file(path), opt);
}

inline std::string to_csv(const CategoricalTable& t) {
    std::string out;
    for (std::size_t v = 0; v < t.n_vars(); ++v) {
        if (v) out += ',';
        out += detail::csv_escape(t.variables[v]);
    }
    out += '\n';
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        for (std::size_t v = 0; v < t.n_vars(); ++v) {
            if (v) out += ',';
            out += detail::csv_escape(t.states[v][static_cast<std::size_t>(t.at(r, v))]);
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json table_metadata_json(const CategoricalTable& t) {
    nlohmann::json meta;
    meta["variables"] = t.variables;
    meta["states"] = t.states;
    meta["n_rows"] = t.n_rows();
    return meta;
}

inline FeatureMatrix encode(const CategoricalTable& t, Encoding mode) {
    if (t.n_rows() == 0 || t.n_vars() == 0) throw DataError("encode: table is empty");
    FeatureMatrix fm;
    fm.encoding = mode;
    if (mode == Encoding::integer) {
        fm.data = Matrix(t.n_rows(), t.n_vars());
        for (std::size_t v = 0; v < t.n_vars(); ++v) fm.column_map.push_back({v, -1});
        for (std::size_t r = 0; r < t.n_rows(); ++r)
            for (std::size_t v = 0; v < t.n_vars(); ++v) fm.data.at(r, v) = static_cast<double>(t.at(r, v));
    } else {
        std::size_t dims = 0;
        for (std::size_t v = 0; v < t.n_vars(); ++v) dims += t.states[v].size();
        fm.data = Matrix(t.n_rows(), dims);
        std::vector<std::size_t> offset(t.n_vars());
        std::size_t col = 0;
        for (std::size_t v = 0; v < t.n_vars(); ++v) {
            offset[v] = col;
            for (int s = 0; s < t.cardinality(v); ++s) fm.column_map.push_back({v, s});
            col += t.states[v].size();
        }
        for (std::size_t r = 0; r < t.n_rows(); ++r)
            for (std::size_t v = 0; v < t.n_vars(); ++v)
                fm.data.at(r, offset[v] + static_cast<std::size_t>(t.at(r, v))) = 1.0;
    }
    return fm;
}

// Inverse of encode given the source schema; exercised by the round-trip
// property tests.
inline CategoricalTable decode(const FeatureMatrix& fm,
                               const std::vector<std::string>& variables,
                               const std::vector<std::vector<std::string>>& states) {
    CategoricalTable t;
    t.variables = variables;
    t.states = states;
    t.cells.assign(fm.n_rows() * variables.size(), -1);
    for (std::size_t r = 0; r < fm.n_rows(); ++r) {
        for (std::size_t c = 0; c < fm.n_dims(); ++c) {
            const ColumnOrigin& origin = fm.column_map[c];
            double x = fm.data.at(r, c);
            if (fm.encoding == Encoding::integer) {
                t.at(r, origin.variable) = static_cast<int>(x);
            } else if (x == 1.0) {
                t.at(r, origin.variable) = origin.state;
            }
        }
    }
    t.validate();
    return t;
}

struct SplitResult {
    CategoricalTable train;
    CategoricalTable val;
    CategoricalTable test;
    // Original row index of each split row, in emission order.
    std::vector<std::size_t> train_rows, val_rows, test_rows;
};

inline SplitResult split(const CategoricalTable& t, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = t.n_rows();
    if (n < 10) throw DataError("split: need at least 10 rows, got " + std::to_string(n));

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    SplitMix64 rng(spec.seed);
    rng.shuffle(perm);

    const auto n_val = static_cast<std::size_t>(spec.val * static_cast<double>(n));
    const auto n_test = static_cast<std::size_t>(spec.test * static_cast<double>(n));
    const std::size_t n_train = n - n_val - n_test;  // remainder goes to train

    auto take = [&](std::size_t lo, std::size_t hi, std::vector<std::size_t>& rows_out) {
        CategoricalTable part;
        part.variables = t.variables;
        part.states = t.states;
        for (std::size_t i = lo; i < hi; ++i) {
            rows_out.push_back(perm[i]);
            for (std::size_t v = 0; v < t.n_vars(); ++v) part.cells.push_back(t.at(perm[i], v));
        }
        return part;
    };

    SplitResult out;
    out.train = take(0, n_train, out.train_rows);
    out.val = take(n_train, n_train + n_val, out.val_rows);
    out.test = take(n_train + n_val, n, out.test_rows);
    return out;
}

}  // namespace cpdforge
