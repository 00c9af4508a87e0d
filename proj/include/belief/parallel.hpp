#pragma once

#include <cstddef>
#include <functional>

namespace belief {

/// Worker cap for every parallel loop in the library. Defaults to the
/// logical core count, overridden by BELIEF_JOBS or set_jobs().
std::size_t jobs();
void set_jobs(std::size_t n);

/// Runs body(i) for i in [0, n). Work is split into contiguous blocks, one per
/// worker, so results never depend on scheduling as long as body(i) only
/// writes state owned by index i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace belief
