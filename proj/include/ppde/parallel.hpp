#pragma once

#include <cstddef>
#include <functional>

namespace ppde {

/// Number of worker threads used by path-parallel loops. Results never depend
/// on this value: work is split into fixed-size chunks and every reduction is
/// done afterwards in chunk order.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

inline constexpr std::size_t kChunkSize = 4096;

/// Calls body(begin, end) for consecutive chunks covering [0, count).
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t chunk = kChunkSize);

}  // namespace ppde
