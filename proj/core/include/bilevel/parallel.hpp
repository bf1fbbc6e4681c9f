#pragma once

#include <functional>

namespace bilevel {

/// Number of workers to use: min(BILEVEL_THREADS when set, requested when
/// positive, hardware concurrency). Never less than 1.
int worker_count(int requested = 0);

/// Runs fn(i) for i in [0, n) across worker threads. Workers take indices
/// i, i + T, i + 2T, ... so any result slots indexed by i can be reduced in
/// plain index order afterwards. The first exception thrown by any worker is
/// rethrown in the caller.
void parallel_for(int n, const std::function<void(int)>& fn, int requested_workers = 0);

}  // namespace bilevel
