#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cpdforge {

// Error taxonomy mirrored by the CLI exit codes: config 2, data 3, numeric 4.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// SplitMix64 (Steele/Lea/Vigna): 64-bit state, identical output on every
// platform. All randomness in the library flows through this generator so
// seeded runs reproduce bit-for-bit.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased integer in [0, n) via Lemire's multiply-shift with rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw ConfigError("next_below: n must be positive");
        while (true) {
            std::uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * n;
            auto lo = static_cast<std::uint64_t>(m);
            if (lo >= n || lo >= (0ull - n) % n) return static_cast<std::uint64_t>(m >> 64);
        }
    }

    // Fisher-Yates shuffle of indices [0, n).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Derives an independent stream seed from (seed, index) pairs. One SplitMix64
// step of the mixed value keeps streams decorrelated for counter-based use.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 g(seed ^ (0x632be59bd9b4e019ull + index * 0x9e3779b97f4a7c15ull));
    return g.next_u64();
}

// Dense row-major matrix of doubles. Deliberately minimal: the models here
// are small enough that hand-rolled loops beat pulling in a BLAS.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
};

// Worker cap: CPDFORGE_THREADS if set (>=1), else hardware concurrency.
inline unsigned thread_count() {
    if (const char* env = std::getenv("CPDFORGE_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

namespace detail {
// Fixed block size so partial results have worker-count-independent
// boundaries; callers that reduce must combine per-block partials in block
// order to stay deterministic.
inline constexpr std::size_t kParallelBlock = 2048;
}  // namespace detail

// Runs fn(i) for i in [0, n). fn must only write to per-i slots.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    unsigned workers = thread_count();
    if (workers <= 1 || n < 2 * detail::kParallelBlock) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t n_blocks = (n + detail::kParallelBlock - 1) / detail::kParallelBlock;
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        while (true) {
            std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) break;
            std::size_t lo = b * detail::kParallelBlock;
            std::size_t hi = std::min(n, lo + detail::kParallelBlock);
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        }
    };
    std::vector<std::thread> pool;
    unsigned spawn = std::min<std::size_t>(workers, n_blocks);
    pool.reserve(spawn);
    for (unsigned t = 1; t < spawn; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

// Full-precision, locale-independent double formatting for CSV artifacts.
inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// Two-decimal probability formatting matching the report tables: trailing
// zero in the hundredths place is dropped ("0.80" -> "0.8", "1.00" -> "1.0").
inline std::string format_prob2(double x) {
    if (x == 0.0) x = 0.0;  // normalize -0
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    std::string s(buf);
    if (s.size() >= 2 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
    return s;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << contents;
}

}  // namespace cpdforge
