#pragma once

#include <cstddef>

namespace rmpc {

/// Resolves the worker count for a batch. `requested` <= 0 means "use the
/// OpenMP default". The RICCATI_MPC_THREADS environment variable, when set
/// to a positive integer, overrides the request. Returns 1 when built
/// without OpenMP.
int resolve_threads(int requested);

namespace detail {
void run_indexed(std::size_t count, int threads, void* ctx, void (*body)(void*, std::size_t));
}

/// Runs fn(i) for i in [0, count). With threads > 1 the iterations execute
/// on an OpenMP team; each index must write only to its own output slot.
/// threads <= 1 runs the plain serial loop (the reference path used by the
/// equivalence tests and the benchmark).
template <class F>
void parallel_for_index(std::size_t count, int threads, F&& fn) {
    auto body = [](void* ctx, std::size_t i) { (*static_cast<F*>(ctx))(i); };
    detail::run_indexed(count, threads, &fn, body);
}

}  // namespace rmpc
