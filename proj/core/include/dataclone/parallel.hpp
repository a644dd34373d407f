#pragma once

#include <cstddef>
#include <functional>

namespace dataclone {

// Number of worker threads for intra-stage parallelism. Reads
// DATACLONE_THREADS once; falls back to hardware_concurrency.
size_t worker_threads();

// Runs fn(i) for i in [0, n). Each index must write only its own slots so the
// result is independent of scheduling. Runs inline when n is small or a
// single worker is configured.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace dataclone
