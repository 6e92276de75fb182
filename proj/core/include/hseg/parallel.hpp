#pragma once

#include <cstddef>
#include <functional>

namespace hseg {

/// Runs task(i) for i in [0, tasks) on up to `threads` workers. Tasks are
/// claimed dynamically, so callers must make each task's output independent
/// of which worker runs it. threads <= 1 runs inline on the caller.
void parallel_for(std::size_t tasks, std::size_t threads,
                  const std::function<void(std::size_t)>& task);

}  // namespace hseg
