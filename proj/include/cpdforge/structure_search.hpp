#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cpdforge/common.hpp"
#include "cpdforge/cpd_estimation.hpp"
#include "cpdforge/dag_core.hpp"
#include "cpdforge/data_model.hpp"

namespace cpdforge {

enum class ScoreType { bic, bdeu };

struct SearchConfig {
    ScoreType score = ScoreType::bic;
    double ess = 1.0;              // only read for bdeu
    std::size_t max_parents = 5;   // 0 means unlimited
    std::size_t max_iterations = 1000;
    std::size_t restarts = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (max_iterations < 1) throw ConfigError("search config: max_iterations must be >= 1");
        if (restarts < 1) throw ConfigError("search config: restarts must be >= 1");
        if (score == ScoreType::bdeu && !(ess > 0)) throw ConfigError("search config: ess must be positive for bdeu");
    }
};

struct ScoredDag {
    Dag dag;
    double score = 0.0;
    std::size_t iterations_used = 0;
    std::vector<double> score_trace;  // running total after each accepted move
};

namespace detail {

// Decomposable local score with a per-(variable, parent set) cache. Parent
// sets are bitmasks, which caps the search at 64 variables.
class Scorer {
public:
    Scorer(const CategoricalTable& t, const SearchConfig& cfg) : t_(t), cfg_(cfg) {
        if (t.n_rows() == 0) throw DataError("score: empty table");
        if (t.n_vars() > 64) throw ConfigError("score: more than 64 variables");
        cache_.resize(t.n_vars());
        log_n_ = std::log(static_cast<double>(t.n_rows()));
    }

    double local(int var, std::uint64_t parent_mask) {
        auto& m = cache_[static_cast<std::size_t>(var)];
        auto it = m.find(parent_mask);
        if (it != m.end()) return it->second;
        double s = compute(var, parent_mask);
        m.emplace(parent_mask, s);
        return s;
    }

    const CategoricalTable& table() const { return t_; }

private:
    double compute(int var, std::uint64_t parent_mask) const {
        std::vector<int> parents;
        for (int p = 0; p < static_cast<int>(t_.n_vars()); ++p)
            if (parent_mask & (1ull << p)) parents.push_back(p);
        std::size_t q = 1;
        for (int p : parents) {
            q *= static_cast<std::size_t>(t_.cardinality(static_cast<std::size_t>(p)));
            if (q > (1ull << 30)) throw NumericError("score: parent configuration space too large");
        }
        const int r = t_.cardinality(static_cast<std::size_t>(var));
        auto counts = joint_counts(t_, var, parents, q);

        if (cfg_.score == ScoreType::bic) {
            double ll = 0.0;
            for (std::size_t cfg = 0; cfg < q; ++cfg) {
                double n_cfg = 0;
                for (int s = 0; s < r; ++s) n_cfg += counts[cfg * static_cast<std::size_t>(r) + static_cast<std::size_t>(s)];
                if (n_cfg == 0) continue;  // 0 * ln 0 := 0
                for (int s = 0; s < r; ++s) {
                    double n = counts[cfg * static_cast<std::size_t>(r) + static_cast<std::size_t>(s)];
                    if (n > 0) ll += n * std::log(n / n_cfg);
                }
            }
            double penalty = 0.5 * log_n_ * static_cast<double>(r - 1) * static_cast<double>(q);
            return ll - penalty;
        }

        // BDeu: symmetric Dirichlet with equivalent sample size spread over
        // the table; alpha_cfg = ess/q, alpha_cell = ess/(q*r).
        const double a_cfg = cfg_.ess / static_cast<double>(q);
        const double a_cell = a_cfg / static_cast<double>(r);
        double score = 0.0;
        for (std::size_t cfg = 0; cfg < q; ++cfg) {
            double n_cfg = 0;
            for (int s = 0; s < r; ++s) n_cfg += counts[cfg * static_cast<std::size_t>(r) + static_cast<std::size_t>(s)];
            score += std::lgamma(a_cfg) - std::lgamma(a_cfg + n_cfg);
            for (int s = 0; s < r; ++s) {
                double n = counts[cfg * static_cast<std::size_t>(r) + static_cast<std::size_t>(s)];
                score += std::lgamma(a_cell + n) - std::lgamma(a_cell);
            }
        }
        return score;
    }

    const CategoricalTable& t_;
    SearchConfig cfg_;
    double log_n_;
    std::vector<std::unordered_map<std::uint64_t, double>> cache_;
};

inline std::uint64_t mask_of(const std::vector<int>& nodes) {
    std::uint64_t m = 0;
    for (int n : nodes) m |= 1ull << n;
    return m;
}

// True when `to` is reachable from `from` along directed edges.
inline bool path_exists(const std::vector<std::uint64_t>& children_mask, int from, int to, std::size_t n) {
    std::uint64_t visited = 0, frontier = children_mask[static_cast<std::size_t>(from)];
    while (frontier) {
        if (frontier & (1ull << to)) return true;
        visited |= frontier;
        std::uint64_t next = 0;
        std::uint64_t f = frontier;
        while (f) {
            int v = std::countr_zero(f);
            f &= f - 1;
            next |= children_mask[static_cast<std::size_t>(v)];
        }
        frontier = next & ~visited;
    }
    (void)n;
    return false;
}

inline bool masks_acyclic(const std::vector<std::uint64_t>& parent_mask, std::size_t n) {
    std::uint64_t remaining = n == 64 ? ~0ull : (1ull << n) - 1;
    bool progress = true;
    while (remaining && progress) {
        progress = false;
        std::uint64_t rem = remaining;
        while (rem) {
            int v = std::countr_zero(rem);
            rem &= rem - 1;
            if ((parent_mask[static_cast<std::size_t>(v)] & remaining) == 0) {
                remaining &= ~(1ull << v);
                progress = true;
            }
        }
    }
    return remaining == 0;
}

inline Dag dag_from_parent_masks(const std::vector<std::uint64_t>& parent_mask,
                                 const std::vector<std::string>& names) {
    std::set<std::pair<int, int>> edges;
    for (std::size_t c = 0; c < parent_mask.size(); ++c) {
        std::uint64_t m = parent_mask[c];
        while (m) {
            int p = std::countr_zero(m);
            m &= m - 1;
            edges.emplace(p, static_cast<int>(c));
        }
    }
    return Dag(parent_mask.size(), names, std::move(edges));
}

inline std::vector<std::pair<int, int>> sorted_edges(const std::vector<std::uint64_t>& parent_mask) {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t c = 0; c < parent_mask.size(); ++c) {
        std::uint64_t m = parent_mask[c];
        while (m) {
            int p = std::countr_zero(m);
            m &= m - 1;
            edges.emplace_back(p, static_cast<int>(c));
        }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

}  // namespace detail

// BIC (default) or BDeu score of one variable given a parent set.
inline double local_score(const CategoricalTable& t, int var, const std::vector<int>& parents,
                          const SearchConfig& cfg = {}) {
    cfg.validate();
    if (var < 0 || var >= static_cast<int>(t.n_vars())) throw DataError("local_score: variable out of range");
    for (int p : parents) {
        if (p == var) throw ConfigError("local_score: variable proposed as its own parent");
        if (p < 0 || p >= static_cast<int>(t.n_vars())) throw DataError("local_score: parent out of range");
    }
    detail::Scorer scorer(t, cfg);
    return scorer.local(var, detail::mask_of(parents));
}

inline double total_score(const CategoricalTable& t, const Dag& dag, const SearchConfig& cfg = {}) {
    cfg.validate();
    detail::check_same_variables(t, dag);
    detail::Scorer scorer(t, cfg);
    double total = 0.0;
    for (std::size_t v = 0; v < t.n_vars(); ++v)
        total += scorer.local(static_cast<int>(v), detail::mask_of(dag.parents(static_cast<int>(v))));
    return total;
}

// Visits every DAG on n nodes as a parent-mask vector. Enumerates all
// directed graphs on the off-diagonal pairs and filters by acyclicity; only
// sane for n <= 5.
template <typename Visitor>
void for_each_dag(std::size_t n, Visitor&& visit) {
    if (n > 5) throw ConfigError("for_each_dag: supports at most 5 nodes");
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < static_cast<int>(n); ++i)
        for (int j = 0; j < static_cast<int>(n); ++j)
            if (i != j) pairs.emplace_back(i, j);
    const std::size_t m = pairs.size();
    std::vector<std::uint64_t> parent_mask(n, 0);
    for (std::uint64_t bits = 0; bits < (1ull << m); ++bits) {
        std::fill(parent_mask.begin(), parent_mask.end(), 0);
        std::uint64_t b = bits;
        while (b) {
            int e = std::countr_zero(b);
            b &= b - 1;
            parent_mask[static_cast<std::size_t>(pairs[static_cast<std::size_t>(e)].second)] |=
                1ull << pairs[static_cast<std::size_t>(e)].first;
        }
        if (detail::masks_acyclic(parent_mask, n)) visit(const_cast<const std::vector<std::uint64_t>&>(parent_mask));
    }
}

// Global maximizer of total_score over all DAGs on <= 5 variables. Score ties
// break toward fewer edges, then the lexicographically smaller edge set.
inline ScoredDag exhaustive_search(const CategoricalTable& t, const SearchConfig& cfg = {}) {
    cfg.validate();
    if (t.n_vars() > 5) throw ConfigError("exhaustive_search: supports at most 5 variables");
    if (t.n_vars() == 0) throw DataError("exhaustive_search: table has no variables");
    detail::Scorer scorer(t, cfg);
    const std::size_t n = t.n_vars();

    bool have_best = false;
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<std::uint64_t> best_masks;
    std::vector<std::pair<int, int>> best_edges;
    std::size_t count = 0;

    for_each_dag(n, [&](const std::vector<std::uint64_t>& masks) {
        ++count;
        double s = 0.0;
        for (std::size_t v = 0; v < n; ++v) s += scorer.local(static_cast<int>(v), masks[v]);
        const double tol = 1e-12 * std::max(1.0, std::abs(best_score));
        if (!have_best || s > best_score + tol) {
            have_best = true;
            best_score = s;
            best_masks = masks;
            best_edges = detail::sorted_edges(masks);
            return;
        }
        if (s >= best_score - tol) {
            auto edges = detail::sorted_edges(masks);
            if (edges.size() < best_edges.size() || (edges.size() == best_edges.size() && edges < best_edges)) {
                best_score = std::max(best_score, s);
                best_masks = masks;
                best_edges = std::move(edges);
            }
        }
    });

    ScoredDag out;
    out.dag = detail::dag_from_parent_masks(best_masks, t.variables);
    out.score = 0.0;
    for (std::size_t v = 0; v < n; ++v) out.score += scorer.local(static_cast<int>(v), best_masks[v]);
    out.iterations_used = count;
    return out;
}

namespace detail {

enum class MoveKind { add, remove, reverse };

struct Move {
    MoveKind kind;
    int parent;
    int child;
    double delta;
};

// One greedy run from the given starting graph. Applies the single best
// score-improving add/delete/reverse per iteration; ties go to the lowest
// (parent, child) pair, then move kind order.
inline double hill_climb_run(Scorer& scorer, const SearchConfig& cfg, std::vector<std::uint64_t>& parent_mask,
                             std::size_t& iterations, std::vector<double>* trace) {
    const auto n = scorer.table().n_vars();
    std::vector<std::uint64_t> children_mask(n, 0);
    for (std::size_t c = 0; c < n; ++c) {
        std::uint64_t m = parent_mask[c];
        while (m) {
            int p = std::countr_zero(m);
            m &= m - 1;
            children_mask[static_cast<std::size_t>(p)] |= 1ull << c;
        }
    }
    std::vector<double> local(n);
    double total = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        local[v] = scorer.local(static_cast<int>(v), parent_mask[v]);
        total += local[v];
    }
    if (trace) trace->push_back(total);

    constexpr double kImprove = 1e-9;
    const std::size_t max_parents = cfg.max_parents == 0 ? n : cfg.max_parents;
    iterations = 0;

    while (iterations < cfg.max_iterations) {
        bool found = false;
        Move best{MoveKind::add, 0, 0, 0.0};
        auto consider = [&](MoveKind kind, int p, int c, double delta) {
            if (delta <= kImprove) return;
            if (!found || delta > best.delta ||
                (delta == best.delta && std::pair(p, c) < std::pair(best.parent, best.child)) ||
                (delta == best.delta && std::pair(p, c) == std::pair(best.parent, best.child) && kind < best.kind)) {
                best = Move{kind, p, c, delta};
                found = true;
            }
        };

        for (int p = 0; p < static_cast<int>(n); ++p) {
            for (int c = 0; c < static_cast<int>(n); ++c) {
                if (p == c) continue;
                const std::uint64_t pbit = 1ull << p;
                const std::uint64_t cbit = 1ull << c;
                const bool edge = parent_mask[static_cast<std::size_t>(c)] & pbit;
                if (!edge) {
                    // add p -> c
                    if (static_cast<std::size_t>(std::popcount(parent_mask[static_cast<std::size_t>(c)])) >= max_parents)
                        continue;
                    if (path_exists(children_mask, c, p, n)) continue;  // would close a cycle
                    double delta = scorer.local(c, parent_mask[static_cast<std::size_t>(c)] | pbit) -
                                   local[static_cast<std::size_t>(c)];
                    consider(MoveKind::add, p, c, delta);
                } else {
                    // delete p -> c
                    double del_delta = scorer.local(c, parent_mask[static_cast<std::size_t>(c)] & ~pbit) -
                                       local[static_cast<std::size_t>(c)];
                    consider(MoveKind::remove, p, c, del_delta);
                    // reverse p -> c: delete, then add c -> p
                    if (static_cast<std::size_t>(std::popcount(parent_mask[static_cast<std::size_t>(p)])) >= max_parents)
                        continue;
                    children_mask[static_cast<std::size_t>(p)] &= ~cbit;  // temporarily drop the edge
                    bool ok = !path_exists(children_mask, p, c, n);
                    children_mask[static_cast<std::size_t>(p)] |= cbit;
                    if (!ok) continue;
                    double rev_delta = del_delta + scorer.local(p, parent_mask[static_cast<std::size_t>(p)] | cbit) -
                                       local[static_cast<std::size_t>(p)];
                    consider(MoveKind::reverse, p, c, rev_delta);
                }
            }
        }

        if (!found) break;
        const std::uint64_t pbit = 1ull << best.parent;
        const std::uint64_t cbit = 1ull << best.child;
        switch (best.kind) {
            case MoveKind::add:
                parent_mask[static_cast<std::size_t>(best.child)] |= pbit;
                children_mask[static_cast<std::size_t>(best.parent)] |= cbit;
                break;
            case MoveKind::remove:
                parent_mask[static_cast<std::size_t>(best.child)] &= ~pbit;
                children_mask[static_cast<std::size_t>(best.parent)] &= ~cbit;
                break;
            case MoveKind::reverse:
                parent_mask[static_cast<std::size_t>(best.child)] &= ~pbit;
                children_mask[static_cast<std::size_t>(best.parent)] &= ~cbit;
                parent_mask[static_cast<std::size_t>(best.parent)] |= cbit;
                children_mask[static_cast<std::size_t>(best.child)] |= pbit;
                break;
        }
        local[static_cast<std::size_t>(best.child)] =
            scorer.local(best.child, parent_mask[static_cast<std::size_t>(best.child)]);
        local[static_cast<std::size_t>(best.parent)] =
            scorer.local(best.parent, parent_mask[static_cast<std::size_t>(best.parent)]);
        total += best.delta;
        ++iterations;
        if (trace) trace->push_back(total);
    }
    return total;
}

// Seeded random DAG for restarts: random topological order, forward edges
// kept with probability 1/4 subject to the parent cap.
inline std::vector<std::uint64_t> random_start(std::size_t n, std::size_t max_parents, SplitMix64& rng) {
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    std::vector<std::uint64_t> parent_mask(n, 0);
    const std::size_t cap = max_parents == 0 ? n : max_parents;
    for (std::size_t j = 1; j < n; ++j)
        for (std::size_t i = 0; i < j; ++i) {
            if (static_cast<std::size_t>(std::popcount(parent_mask[static_cast<std::size_t>(order[j])])) >= cap) break;
            if (rng.next_double() < 0.25)
                parent_mask[static_cast<std::size_t>(order[j])] |= 1ull << order[i];
        }
    return parent_mask;
}

}  // namespace detail

// Greedy local search over add/delete/reverse moves. The first restart runs
// from the empty DAG; later restarts start from seeded random DAGs. Returns
// the best local maximum across restarts with a freshly recomputed score.
inline ScoredDag hill_climb(const CategoricalTable& t, const SearchConfig& cfg = {}) {
    cfg.validate();
    if (t.n_vars() < 2) throw ConfigError("hill_climb: need at least 2 variables");
    detail::Scorer scorer(t, cfg);
    const std::size_t n = t.n_vars();

    bool have_best = false;
    double best_total = 0.0;
    std::vector<std::uint64_t> best_masks;
    std::size_t best_iterations = 0;
    std::vector<double> best_trace;

    for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
        std::vector<std::uint64_t> masks(n, 0);
        if (restart > 0) {
            SplitMix64 rng(mix_seed(cfg.seed, restart));
            masks = detail::random_start(n, cfg.max_parents, rng);
        }
        std::size_t iterations = 0;
        std::vector<double> trace;
        detail::hill_climb_run(scorer, cfg, masks, iterations, &trace);
        double fresh = 0.0;
        for (std::size_t v = 0; v < n; ++v) fresh += scorer.local(static_cast<int>(v), masks[v]);
        if (!have_best || fresh > best_total) {
            have_best = true;
            best_total = fresh;
            best_masks = std::move(masks);
            best_iterations = iterations;
            best_trace = std::move(trace);
        }
    }

    ScoredDag out;
    out.dag = detail::dag_from_parent_masks(best_masks, t.variables);
    out.score = best_total;
    out.iterations_used = best_iterations;
    out.score_trace = std::move(best_trace);
    return out;
}

}  // namespace cpdforge
