#pragma once

#include <cstdint>
#include <functional>

namespace prodenv {

/// Worker count: PRODENV_THREADS if set and positive, else hardware concurrency.
int worker_count();

/// Calls body(i) for i in [0, n). Iterations must not share mutable state.
/// The first exception thrown by any iteration is rethrown on the caller.
void parallel_for(int n, const std::function<void(int)>& body);

/// Stateless 64-bit mixer used to derive independent RNG streams.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` of a run seeded with `seed`.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace prodenv
