#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpdforge/common.hpp"
#include "cpdforge/data_model.hpp"

namespace cpdforge {

struct ClusterModel {
    int k = 0;
    Matrix centroids;              // k x n_dims
    std::vector<int> assignments;  // per row, nearest centroid (ties -> lowest index)
    double sse = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> sse_trace;  // SSE after each assignment pass
};

struct KSelection {
    int k_min = 2;
    int k_max = 2;
    std::vector<double> dunn_scores;  // aligned with k_min..k_max
    int chosen_k = 2;
};

namespace detail {

inline double squared_distance(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

// Nearest centroid index + squared distance, ties to the lowest index.
inline std::pair<int, double> nearest_centroid(const double* x, const Matrix& centroids) {
    int best = 0;
    double best_d = squared_distance(x, centroids.row(0), centroids.cols);
    for (std::size_t c = 1; c < centroids.rows; ++c) {
        double d = squared_distance(x, centroids.row(c), centroids.cols);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return {best, best_d};
}

}  // namespace detail

// Uniform init: k distinct rows drawn without replacement. Kept as the
// baseline against which the D^2-weighted init is compared.
inline Matrix uniform_init(const Matrix& data, int k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("uniform_init: k must be >= 1");
    if (static_cast<std::size_t>(k) > data.rows) throw DataError("uniform_init: k exceeds number of rows");
    std::vector<std::size_t> idx(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) idx[i] = i;
    SplitMix64 rng(seed);
    Matrix centroids(static_cast<std::size_t>(k), data.cols);
    for (int c = 0; c < k; ++c) {
        std::size_t j = static_cast<std::size_t>(c) + static_cast<std::size_t>(rng.next_below(idx.size() - static_cast<std::size_t>(c)));
        std::swap(idx[static_cast<std::size_t>(c)], idx[j]);
        const double* row = data.row(idx[static_cast<std::size_t>(c)]);
        std::copy(row, row + data.cols, centroids.row(static_cast<std::size_t>(c)));
    }
    return centroids;
}

// D^2-weighted seeding: first centroid uniform over rows, each further
// centroid sampled with probability proportional to the squared distance to
// the nearest centroid chosen so far. When every remaining distance is zero
// the draw falls back to uniform over rows not yet chosen, so k = n_rows
// always yields a permutation of the rows.
inline Matrix kmeanspp_init(const Matrix& data, int k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("kmeanspp_init: k must be >= 1");
    if (data.rows == 0) throw DataError("kmeanspp_init: empty data");
    if (static_cast<std::size_t>(k) > data.rows) throw DataError("kmeanspp_init: k exceeds number of rows");

    SplitMix64 rng(seed);
    Matrix centroids(static_cast<std::size_t>(k), data.cols);
    std::vector<char> chosen(data.rows, 0);

    std::size_t first = static_cast<std::size_t>(rng.next_below(data.rows));
    std::copy(data.row(first), data.row(first) + data.cols, centroids.row(0));
    chosen[first] = 1;

    std::vector<double> d2(data.rows);
    parallel_for(data.rows, [&](std::size_t r) {
        d2[r] = detail::squared_distance(data.row(r), centroids.row(0), data.cols);
    });

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t r = 0; r < data.rows; ++r) total += d2[r];
        std::size_t pick;
        if (total > 0.0) {
            double u = rng.next_double() * total;
            double cum = 0.0;
            pick = data.rows - 1;
            for (std::size_t r = 0; r < data.rows; ++r) {
                cum += d2[r];
                if (u < cum) {
                    pick = r;
                    break;
                }
            }
        } else {
            std::vector<std::size_t> open;
            for (std::size_t r = 0; r < data.rows; ++r)
                if (!chosen[r]) open.push_back(r);
            pick = open[static_cast<std::size_t>(rng.next_below(open.size()))];
        }
        chosen[pick] = 1;
        std::copy(data.row(pick), data.row(pick) + data.cols, centroids.row(static_cast<std::size_t>(c)));
        parallel_for(data.rows, [&](std::size_t r) {
            double d = detail::squared_distance(data.row(r), centroids.row(static_cast<std::size_t>(c)), data.cols);
            if (d < d2[r]) d2[r] = d;
        });
    }
    return centroids;
}

// Lloyd iterations: assignment and mean-update steps until assignments stop
// changing (or centroid movement drops below tol, or max_iter). Empty
// clusters are re-seeded at the point currently farthest from its centroid.
inline ClusterModel lloyd(const Matrix& data, Matrix centroids, std::size_t max_iter = 100, double tol = 1e-9) {
    if (max_iter < 1) throw ConfigError("lloyd: max_iter must be >= 1");
    if (centroids.rows == 0) throw DataError("lloyd: no centroids");
    if (centroids.cols != data.cols) throw DataError("lloyd: dimension mismatch");
    if (data.rows == 0) throw DataError("lloyd: empty data");

    const std::size_t n = data.rows;
    const int k = static_cast<int>(centroids.rows);
    ClusterModel model;
    model.k = k;

    std::vector<int> assign(n);
    std::vector<double> dist2(n);
    bool repaired = false;
    auto assignment_pass = [&]() {
        repaired = false;
        parallel_for(n, [&](std::size_t r) {
            auto [c, d] = detail::nearest_centroid(data.row(r), centroids);
            assign[r] = c;
            dist2[r] = d;
        });
        // repair empty clusters: move the globally farthest point, lowest
        // row index on ties, one per empty cluster in ascending order
        std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
        for (std::size_t r = 0; r < n; ++r) ++sizes[static_cast<std::size_t>(assign[r])];
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t r = 0; r < n; ++r) {
                if (sizes[static_cast<std::size_t>(assign[r])] <= 1) continue;  // do not empty another cluster
                if (dist2[r] > far_d) {
                    far_d = dist2[r];
                    far = r;
                }
            }
            if (far_d < 0.0) continue;  // nothing movable
            --sizes[static_cast<std::size_t>(assign[far])];
            std::copy(data.row(far), data.row(far) + data.cols, centroids.row(static_cast<std::size_t>(c)));
            assign[far] = c;
            dist2[far] = 0.0;
            ++sizes[static_cast<std::size_t>(c)];
            repaired = true;
        }
        double sse = 0.0;
        for (std::size_t r = 0; r < n; ++r) sse += dist2[r];
        return sse;
    };

    double sse = assignment_pass();
    model.sse_trace.push_back(sse);
    std::vector<int> prev = assign;

    bool converged = false;
    std::size_t iter = 0;
    while (iter < max_iter) {
        // mean update; deterministic accumulation in row order
        Matrix sums(static_cast<std::size_t>(k), data.cols);
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t r = 0; r < n; ++r) {
            double* srow = sums.row(static_cast<std::size_t>(assign[r]));
            const double* x = data.row(r);
            for (std::size_t d = 0; d < data.cols; ++d) srow[d] += x[d];
            ++counts[static_cast<std::size_t>(assign[r])];
        }
        double movement = 0.0;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) continue;  // keep stale centroid; repair handles it
            double* crow = centroids.row(static_cast<std::size_t>(c));
            const double* srow = sums.row(static_cast<std::size_t>(c));
            double moved = 0.0;
            for (std::size_t d = 0; d < data.cols; ++d) {
                double nv = srow[d] / static_cast<double>(counts[static_cast<std::size_t>(c)]);
                double diff = nv - crow[d];
                moved += diff * diff;
                crow[d] = nv;
            }
            movement = std::max(movement, moved);
        }
        ++iter;
        sse = assignment_pass();
        model.sse_trace.push_back(sse);
        if (assign == prev) {
            converged = true;
            break;
        }
        prev = assign;
        if (!repaired && movement <= tol * tol) {
            converged = true;
            break;
        }
    }

    model.centroids = std::move(centroids);
    model.assignments = std::move(assign);
    model.sse = sse;
    model.iterations = iter;
    model.converged = converged;
    return model;
}

// Dunn validity index: minimum single-linkage inter-cluster distance over the
// maximum cluster diameter (plain Euclidean distances). All-singleton or
// zero-diameter clusterings return +infinity.
inline double dunn_index(const Matrix& data, const ClusterModel& model) {
    if (model.k < 2) throw ConfigError("dunn_index: need at least 2 clusters");
    if (model.assignments.size() != data.rows) throw DataError("dunn_index: assignment length mismatch");
    std::vector<std::size_t> sizes(static_cast<std::size_t>(model.k), 0);
    for (int a : model.assignments) {
        if (a < 0 || a >= model.k) throw DataError("dunn_index: assignment out of range");
        ++sizes[static_cast<std::size_t>(a)];
    }
    for (int c = 0; c < model.k; ++c)
        if (sizes[static_cast<std::size_t>(c)] == 0) throw DataError("dunn_index: empty cluster " + std::to_string(c));

    const std::size_t n = data.rows;
    // per-row partial results so the pair scan can run on worker threads;
    // min/max reduction is order-independent
    std::vector<double> row_min_inter(n, std::numeric_limits<double>::infinity());
    std::vector<double> row_max_intra(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = std::sqrt(detail::squared_distance(data.row(i), data.row(j), data.cols));
            if (model.assignments[i] == model.assignments[j]) {
                if (d > row_max_intra[i]) row_max_intra[i] = d;
            } else {
                if (d < row_min_inter[i]) row_min_inter[i] = d;
            }
        }
    });
    double min_inter = std::numeric_limits<double>::infinity();
    double max_diameter = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        min_inter = std::min(min_inter, row_min_inter[i]);
        max_diameter = std::max(max_diameter, row_max_intra[i]);
    }
    if (max_diameter == 0.0) return std::numeric_limits<double>::infinity();
    return min_inter / max_diameter;
}

// Best-SSE run over a fixed number of seeded kmeans++ restarts. Restart r
// uses the derived seed mix(seed, r), so the result is a pure function of
// (data, k, seed, restarts).
inline ClusterModel fit_kmeans(const Matrix& data, int k, std::uint64_t seed, std::size_t restarts = 5,
                               std::size_t max_iter = 100, double tol = 1e-9) {
    if (restarts < 1) throw ConfigError("fit_kmeans: restarts must be >= 1");
    ClusterModel best;
    bool have = false;
    for (std::size_t r = 0; r < restarts; ++r) {
        Matrix init = kmeanspp_init(data, k, mix_seed(seed, r));
        ClusterModel model = lloyd(data, std::move(init), max_iter, tol);
        if (!have || model.sse < best.sse) {
            best = std::move(model);
            have = true;
        }
    }
    return best;
}

// Scans k in [k_min, k_max], fitting each k with a seed derived from
// (seed, k), and keeps the Dunn-maximizing k (ties -> smallest k). Pass
// models_out to reuse the fitted models.
inline KSelection select_k(const Matrix& data, int k_min, int k_max, std::uint64_t seed,
                           std::vector<ClusterModel>* models_out = nullptr, std::size_t max_iter = 100,
                           double tol = 1e-9, std::size_t restarts = 5) {
    if (k_min < 2 || k_min > k_max || static_cast<std::size_t>(k_max) > data.rows)
        throw ConfigError("select_k: need 2 <= k_min <= k_max <= n_rows");
    KSelection sel;
    sel.k_min = k_min;
    sel.k_max = k_max;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        ClusterModel model = fit_kmeans(data, k, mix_seed(seed, static_cast<std::uint64_t>(k)), restarts, max_iter, tol);
        double score = dunn_index(data, model);
        sel.dunn_scores.push_back(score);
        if (score > best) {
            best = score;
            sel.chosen_k = k;
        }
        if (models_out) models_out->push_back(std::move(model));
    }
    return sel;
}

// FeatureMatrix convenience wrappers (clustering consumes encoded tables).
inline Matrix kmeanspp_init(const FeatureMatrix& fm, int k, std::uint64_t seed) {
    return kmeanspp_init(fm.data, k, seed);
}
inline ClusterModel lloyd(const FeatureMatrix& fm, Matrix centroids, std::size_t max_iter = 100, double tol = 1e-9) {
    return lloyd(fm.data, std::move(centroids), max_iter, tol);
}
inline double dunn_index(const FeatureMatrix& fm, const ClusterModel& model) { return dunn_index(fm.data, model); }
inline KSelection select_k(const FeatureMatrix& fm, int k_min, int k_max, std::uint64_t seed,
                           std::vector<ClusterModel>* models_out = nullptr) {
    return select_k(fm.data, k_min, k_max, seed, models_out);
}

inline nlohmann::json cluster_model_to_json(const ClusterModel& model) {
    nlohmann::json j;
    j["k"] = model.k;
    nlohmann::json cents = nlohmann::json::array();
    for (std::size_t c = 0; c < model.centroids.rows; ++c) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t d = 0; d < model.centroids.cols; ++d) row.push_back(model.centroids.at(c, d));
        cents.push_back(row);
    }
    j["centroids"] = cents;
    j["sse"] = model.sse;
    j["iterations"] = model.iterations;
    return j;
}

inline std::string assignments_csv(const ClusterModel& model) {
    std::string out;
    for (int a : model.assignments) {
        out += std::to_string(a);
        out += '\n';
    }
    return out;
}

}  // namespace cpdforge
