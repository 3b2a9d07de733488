#pragma once

#include <functional>

namespace dvton {

// Worker count from DVTON_THREADS, else 1.
int default_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers. Items are claimed in
// index order; the exception of the lowest failing index is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace dvton
