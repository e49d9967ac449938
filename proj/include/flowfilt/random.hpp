#pragma once

#include "flowfilt/linalg.hpp"

#include <cstdint>

namespace flowfilt {

// Separates the independent uses of one seed.
enum class NoiseDomain : std::uint64_t {
    Diffusion = 0x64696666ULL,
    PriorSample = 0x7072696fULL,
    StabilityDraw = 0x73746162ULL,
    Truth = 0x74727574ULL,
    Measurement = 0x6d656173ULL,
    Process = 0x70726f63ULL,
};

/// Counter-based source of standard normals: the draws for
/// (seed, stream_id, step) are a pure function of that triple, so particles can
/// be advanced in any order or on any thread and replay bit-identically.
struct NoiseStream {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    NoiseDomain domain = NoiseDomain::Diffusion;

    // Fills `out` with i.i.d. N(0, 1) draws for the given step counter.
    void normals(std::uint64_t step, Eigen::Ref<Vector> out) const;
    Vector normals(std::uint64_t step, Eigen::Index count) const;
    // A single U(0, 1) draw (open interval) for the given counter.
    double uniform(std::uint64_t step) const;
    // Everything but the step counter, hashed once; see standard_normals.
    std::uint64_t key() const;
};

// Same draws as NoiseStream::normals for the stream whose key() is `key`.
void standard_normals(std::uint64_t key, std::uint64_t step, Eigen::Ref<Vector> out);
double standard_normal(std::uint64_t key, std::uint64_t step);

std::uint64_t mix64(std::uint64_t x);

}  // namespace flowfilt
