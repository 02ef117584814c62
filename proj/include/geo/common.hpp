#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace geo {

// ============================================================
// Seeding and deterministic RNG
// ============================================================

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// One global seed fans out to per-component streams keyed by label.
inline uint64_t derive_seed(uint64_t seed, std::string_view label) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    uint64_t s = seed ^ h;
    splitmix64(s);
    return splitmix64(s);
}

inline uint64_t derive_seed(uint64_t seed, std::string_view label, uint64_t index) {
    uint64_t s = derive_seed(seed, label) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
}

// Self-contained generator: identical streams on every platform, unlike
// std::normal_distribution which is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // warm up so nearby seeds decorrelate
        splitmix64(state_);
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
        uint64_t span = uint64_t(hi) - uint64_t(lo) + 1;
        return lo + int(next_u64() % span);
    }

    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    // Box-Muller, no caching: one deterministic draw per call.
    double normal() {
        double u1 = (double(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    int pick(int n) { return int(next_u64() % uint64_t(n)); }  // [0, n)

private:
    uint64_t state_;
};

// Fisher-Yates with the project Rng so shuffles replay across platforms.
template <class T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[std::size_t(rng.pick(int(i)))]);
}

// ============================================================
// Parallelism
// ============================================================

// Runs fn(i) for i in [0, n). Results must be written to pre-sized slots so
// output is identical regardless of scheduling. Rethrows the first failure.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

int default_workers();

// ============================================================
// Logging (level via GEO_EXEC_LOG: debug|info|warn|error, default warn)
// ============================================================

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel log_threshold();
void log(LogLevel level, const std::string& msg);

inline void log_debug(const std::string& m) { log(LogLevel::debug, m); }
inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log(LogLevel::warn, m); }
inline void log_error(const std::string& m) { log(LogLevel::error, m); }

// ============================================================
// Formatting / misc numeric helpers
// ============================================================

// Shortest round-trip decimal form; deterministic across runs.
std::string fmt_double(double v);

inline bool is_missing(double v) { return std::isnan(v); }

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return kMissing;
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

// Sample (n-1) standard deviation.
inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

}  // namespace geo
