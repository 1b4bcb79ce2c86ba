#pragma once

#include <cstddef>
#include <functional>

namespace tcnn {

/// Calls fn(i) for every i in [0, n) on up to `threads` workers. Work items
/// must only write to their own slots; callers reduce in index order, which
/// keeps results independent of the thread count. The exception of the
/// lowest failing index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace tcnn
