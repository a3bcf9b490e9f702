#pragma once

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpdforge/common.hpp"
#include "cpdforge/data_model.hpp"

namespace cpdforge {

// Per-class probability distribution over demographic categories. Categories
// are the cross product of the configured demographic variables, with the
// first variable as the outer key (e.g. "Female 0 - 9 Years" ... "Male 80+").
struct DemographicTable {
    int k = 0;
    std::vector<std::string> categories;
    Matrix probs;                  // k x n_categories
    std::vector<char> empty_classes;  // 1 where the class had no rows and fell back to uniform

    std::size_t n_categories() const { return categories.size(); }

    void validate(double tol = 1e-6) const {
        if (probs.rows != static_cast<std::size_t>(k) || probs.cols != categories.size())
            throw DataError("demographic table: shape mismatch");
        for (int c = 0; c < k; ++c) {
            double sum = 0;
            for (std::size_t g = 0; g < categories.size(); ++g) {
                double p = probs.at(static_cast<std::size_t>(c), g);
                if (p < 0.0 || p > 1.0) throw DataError("demographic table: probability outside [0,1]");
                sum += p;
            }
            if (std::abs(sum - 1.0) > tol)
                throw DataError("demographic table: class row " + std::to_string(c) + " does not sum to 1");
        }
    }
};

// Builds the category label list for a (major, minor) pair of demographic
// variables, major key outermost.
inline std::vector<std::string> demographic_categories(const std::vector<std::string>& major_states,
                                                       const std::vector<std::string>& minor_states) {
    std::vector<std::string> out;
    for (const auto& g : major_states)
        for (const auto& a : minor_states) out.push_back(g + " " + a);
    return out;
}

// MLE counting over generic category indices. Classes with no rows get a
// uniform row plus a flag.
inline DemographicTable fit_demographic_table(const std::vector<int>& class_labels,
                                              const std::vector<int>& category_per_row, int k,
                                              std::vector<std::string> categories) {
    if (class_labels.size() != category_per_row.size())
        throw DataError("fit_demographic_table: labels and demographics differ in length");
    if (k < 1) throw ConfigError("fit_demographic_table: k must be positive");
    const std::size_t n_cat = categories.size();
    DemographicTable t;
    t.k = k;
    t.categories = std::move(categories);
    t.probs = Matrix(static_cast<std::size_t>(k), n_cat);
    t.empty_classes.assign(static_cast<std::size_t>(k), 0);
    std::vector<double> class_totals(static_cast<std::size_t>(k), 0.0);
    for (std::size_t r = 0; r < class_labels.size(); ++r) {
        int c = class_labels[r];
        int g = category_per_row[r];
        if (c < 0 || c >= k) throw DataError("fit_demographic_table: class label out of range");
        if (g < 0 || g >= static_cast<int>(n_cat)) throw DataError("fit_demographic_table: category out of range");
        t.probs.at(static_cast<std::size_t>(c), static_cast<std::size_t>(g)) += 1.0;
        class_totals[static_cast<std::size_t>(c)] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
        if (class_totals[static_cast<std::size_t>(c)] == 0.0) {
            for (std::size_t g = 0; g < n_cat; ++g)
                t.probs.at(static_cast<std::size_t>(c), g) = 1.0 / static_cast<double>(n_cat);
            t.empty_classes[static_cast<std::size_t>(c)] = 1;
        } else {
            for (std::size_t g = 0; g < n_cat; ++g)
                t.probs.at(static_cast<std::size_t>(c), g) /= class_totals[static_cast<std::size_t>(c)];
        }
    }
    t.validate();
    return t;
}

// Pair-based variant: demographics as (major, minor) state index pairs.
inline DemographicTable fit_demographic_table(const std::vector<int>& class_labels,
                                              const std::vector<std::pair<int, int>>& demographics, int k,
                                              const std::vector<std::string>& major_states,
                                              const std::vector<std::string>& minor_states) {
    std::vector<int> category(demographics.size());
    const int minor_card = static_cast<int>(minor_states.size());
    for (std::size_t r = 0; r < demographics.size(); ++r) {
        auto [g, a] = demographics[r];
        if (g < 0 || g >= static_cast<int>(major_states.size()) || a < 0 || a >= minor_card)
            throw DataError("fit_demographic_table: demographic state out of range");
        category[r] = g * minor_card + a;
    }
    return fit_demographic_table(class_labels, category, k, demographic_categories(major_states, minor_states));
}

// Highest-probability category for a class; ties resolve to the lowest index.
inline std::pair<std::size_t, double> argmax_demographic(const DemographicTable& t, int cls) {
    if (cls < 0 || cls >= t.k) throw DataError("argmax_demographic: class out of range");
    std::size_t best = 0;
    double best_p = t.probs.at(static_cast<std::size_t>(cls), 0);
    for (std::size_t g = 1; g < t.n_categories(); ++g) {
        double p = t.probs.at(static_cast<std::size_t>(cls), g);
        if (p > best_p) {
            best = g;
            best_p = p;
        }
    }
    return {best, best_p};
}

// Categories carrying exactly zero probability for a class.
inline std::set<std::size_t> zero_support_categories(const DemographicTable& t, int cls) {
    if (cls < 0 || cls >= t.k) throw DataError("zero_support_categories: class out of range");
    std::set<std::size_t> out;
    for (std::size_t g = 0; g < t.n_categories(); ++g)
        if (t.probs.at(static_cast<std::size_t>(cls), g) == 0.0) out.insert(g);
    return out;
}

// Report layout: categories as rows, classes as columns, two-decimal cells.
inline std::string demographic_table_csv(const DemographicTable& t) {
    std::string out;
    for (int c = 0; c < t.k; ++c) out += ",C" + std::to_string(c);
    out += '\n';
    for (std::size_t g = 0; g < t.n_categories(); ++g) {
        out += detail::csv_escape(t.categories[g]);
        for (int c = 0; c < t.k; ++c) {
            out += ',';
            out += format_prob2(t.probs.at(static_cast<std::size_t>(c), g));
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json demographic_table_to_json(const DemographicTable& t) {
    nlohmann::json j;
    j["k"] = t.k;
    j["categories"] = t.categories;
    nlohmann::json probs = nlohmann::json::array();
    for (int c = 0; c < t.k; ++c) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t g = 0; g < t.n_categories(); ++g) row.push_back(t.probs.at(static_cast<std::size_t>(c), g));
        probs.push_back(row);
    }
    j["probs"] = probs;
    nlohmann::json flags = nlohmann::json::array();
    for (int c = 0; c < t.k; ++c)
        if (t.empty_classes[static_cast<std::size_t>(c)]) flags.push_back(c);
    j["flags"] = flags;
    return j;
}

// tol is loose by default so two-decimal report fixtures load; fitted tables
// are validated at 1e-6 when produced.
inline DemographicTable demographic_table_from_json(const nlohmann::json& j, double tol = 0.05) {
    DemographicTable t;
    t.k = j.at("k").get<int>();
    t.categories = j.at("categories").get<std::vector<std::string>>();
    t.probs = Matrix(static_cast<std::size_t>(t.k), t.categories.size());
    const auto& probs = j.at("probs");
    for (int c = 0; c < t.k; ++c)
        for (std::size_t g = 0; g < t.categories.size(); ++g)
            t.probs.at(static_cast<std::size_t>(c), g) = probs[static_cast<std::size_t>(c)][g].get<double>();
    t.empty_classes.assign(static_cast<std::size_t>(t.k), 0);
    for (const auto& f : j.at("flags")) t.empty_classes[f.get<std::size_t>()] = 1;
    t.validate(tol);
    return t;
}

}  // namespace cpdforge
