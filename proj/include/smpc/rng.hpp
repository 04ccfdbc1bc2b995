#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <utility>

namespace smpc {

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31u);
}

/**
 * Counter-based Gaussian source. A sample is a pure function of
 * (seed, stream, counter), so each agent owns an independent stream and the
 * draw for step k does not depend on how many samples other streams took.
 */
class NoiseStream {
public:
    NoiseStream(std::uint64_t seed, std::uint64_t stream) : key_(mix64(mix64(seed) ^ (stream * 0xd1342543de82ef95ull))) {}

    /// Uniform in (0, 1).
    double uniform(std::uint64_t counter, std::uint64_t lane) const {
        const std::uint64_t bits = mix64(key_ ^ mix64(counter * 2 + lane));
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Two independent standard normals (Box–Muller).
    std::pair<double, double> normal_pair(std::uint64_t counter) const {
        const double u1 = uniform(counter, 0);
        const double u2 = uniform(counter, 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586 * u2;
        return {r * std::cos(t), r * std::sin(t)};
    }

    /// N(0, L L^T) sample for a 2x2 square-root factor L.
    Eigen::Vector2d gaussian(std::uint64_t counter, const Eigen::Matrix2d& sqrt_cov) const {
        const auto [a, b] = normal_pair(counter);
        return sqrt_cov * Eigen::Vector2d(a, b);
    }

private:
    std::uint64_t key_;
};

/// Symmetric square root factor of a PSD matrix (clips tiny negative eigenvalues).
Eigen::Matrix2d covariance_sqrt(const Eigen::Matrix2d& cov);

}  // namespace smpc
