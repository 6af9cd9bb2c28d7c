#ifndef N2D_COMMON_HPP
#define N2D_COMMON_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * @file common.hpp
 *
 * @brief Shared matrix aliases, error types and the seeded random engine.
 */

namespace n2d {

/// Samples are stored one per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Labels = std::vector<int>;

/**
 * Root of every error thrown by the library.
 * Each subclass maps to one failure category of the pipeline.
 */
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, bad header, truncated payload).
class FormatError : public Error { using Error::Error; };
/// Inputs that are individually valid but disagree with each other.
class ConsistencyError : public Error { using Error::Error; };
/// Unparseable text input; the message carries the row index.
class ParseError : public Error { using Error::Error; };
class PreconditionError : public Error { using Error::Error; };
class DimensionError : public Error { using Error::Error; };
/// Non-finite values appeared during an iterative optimization.
class DivergenceError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
/// A resource guard (e.g. O(n^2) memory) refused the job.
class GuardError : public Error { using Error::Error; };

/**
 * Pseudo-random engine used across the library.
 *
 * `std::mt19937_64` gives a portable bit stream, but the standard
 * distributions are implementation-defined, so uniform and normal draws are
 * computed here to keep seeded runs identical across toolchains.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [0, bound), bound > 0.
    std::size_t index(std::size_t bound) {
        // Reject the tail so every residue is equally likely.
        const std::uint64_t b = bound;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % b;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % b);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

    /// Derive an independent child seed, e.g. for restarts.
    std::uint64_t fork() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline bool all_finite(const Matrix& m) {
    return m.allFinite();
}

inline int count_distinct(const Labels& labels) {
    int maxv = -1;
    for (int l : labels) {
        maxv = std::max(maxv, l);
    }
    std::vector<char> seen(static_cast<std::size_t>(maxv + 1), 0);
    int count = 0;
    for (int l : labels) {
        if (l >= 0 && !seen[l]) {
            seen[l] = 1;
            ++count;
        }
    }
    return count;
}

} // namespace n2d

#endif
