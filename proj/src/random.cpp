#include "flowfilt/random.hpp"

#include <cmath>
#include <numbers>

namespace flowfilt {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t step_key(std::uint64_t key, std::uint64_t step) { return mix64(key ^ (step + 2 * kGolden)); }

// 53-bit mantissa in (0, 1).
double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t NoiseStream::key() const {
    std::uint64_t k = mix64(static_cast<std::uint64_t>(domain) + kGolden);
    k = mix64(k ^ seed);
    return mix64(k ^ (stream_id + kGolden));
}

void standard_normals(std::uint64_t key, std::uint64_t step, Eigen::Ref<Vector> out) {
    const Eigen::Index count = out.size();
    std::uint64_t counter = step_key(key, step);
    for (Eigen::Index i = 0; i < count; i += 2) {
        counter += kGolden;
        const double u1 = to_open_unit(mix64(counter));
        counter += kGolden;
        const double u2 = to_open_unit(mix64(counter));
        // Box-Muller
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        out(i) = radius * std::cos(angle);
        if (i + 1 < count) out(i + 1) = radius * std::sin(angle);
    }
}

double standard_normal(std::uint64_t key, std::uint64_t step) {
    const std::uint64_t counter = step_key(key, step);
    const double u1 = to_open_unit(mix64(counter + kGolden));
    const double u2 = to_open_unit(mix64(counter + 2 * kGolden));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void NoiseStream::normals(std::uint64_t step, Eigen::Ref<Vector> out) const { standard_normals(key(), step, out); }

Vector NoiseStream::normals(std::uint64_t step, Eigen::Index count) const {
    Vector v(count);
    normals(step, v);
    return v;
}

double NoiseStream::uniform(std::uint64_t step) const {
    return to_open_unit(mix64(step_key(key(), step) + kGolden));
}

}  // namespace flowfilt
