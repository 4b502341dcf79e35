#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>

namespace mfsim {

/// Effective worker count: 0 means hardware parallelism.
[[nodiscard]] std::size_t resolve_threads(std::size_t requested) noexcept;

/// Runs body(i) for i in [0, count) on up to `threads` workers. Items are
/// claimed dynamically; each item must write only its own outputs, so the
/// result does not depend on the worker count. The first exception thrown
/// by any item is rethrown after all workers have joined.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace mfsim
