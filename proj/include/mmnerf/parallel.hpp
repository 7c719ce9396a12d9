// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace mmnerf {

/// Worker count: MMNERF_THREADS if set and positive, else hardware concurrency.
int thread_count();

/// Calls fn(i) for i in [0, n). Work items are claimed dynamically, so fn must
/// write only to storage owned by item i. Exceptions are rethrown on the caller
/// (the one from the lowest failing index wins).
void parallel_for(size_t n, const std::function<void(size_t)>& fn, int threads = 0);

}  // namespace mmnerf
