#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dreamingv2
{

// Thrown when a domain-type invariant is broken (e.g. a malformed PMF).
struct InvariantViolation : std::runtime_error
{
	using std::runtime_error::runtime_error;
};

// Thrown when an operation is invoked under an incompatible configuration
// (e.g. decode() in contrastive-only mode).
struct ConfigurationError : std::runtime_error
{
	using std::runtime_error::runtime_error;
};

// All randomness is drawn from explicit generators; there is no hidden
// global stream. One RandomSource per concern keeps runs reproducible and
// lets concerns (sampling, augmentation, replay, ...) evolve independently.
using RandomSource = torch::Generator;

inline RandomSource make_random_source(uint64_t seed)
{
	auto gen = at::detail::createCPUGenerator(seed);
	return gen;
}

// splitmix64: derives decorrelated per-concern seeds from one run seed.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream_id)
{
	uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1);
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

inline void check(bool condition, const std::string& message)
{
	if (!condition)
	{
		throw std::invalid_argument(message);
	}
}

} // namespace dreamingv2
