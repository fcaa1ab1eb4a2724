#include "rmpc/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rmpc {

int resolve_threads(int requested) {
    if (const char* env = std::getenv("RICCATI_MPC_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) requested = v;
        } catch (...) {
            // ignore malformed values, fall through to the request
        }
    }
#ifdef _OPENMP
    if (requested <= 0) return omp_get_max_threads();
    return requested;
#else
    (void)requested;
    return 1;
#endif
}

namespace detail {

void run_indexed(std::size_t count, int threads, void* ctx, void (*body)(void*, std::size_t)) {
#ifdef _OPENMP
    if (threads > 1 && count > 1) {
        // exceptions may not cross the parallel region; carry the first one out
        std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
        for (long long i = 0; i < static_cast<long long>(count); ++i) {
            try {
                body(ctx, static_cast<std::size_t>(i));
            } catch (...) {
#pragma omp critical(rmpc_parallel_error)
                if (!first_error) first_error = std::current_exception();
            }
        }
        if (first_error) std::rethrow_exception(first_error);
        return;
    }
#else
    (void)threads;
#endif
    for (std::size_t i = 0; i < count; ++i) body(ctx, i);
}

}  // namespace detail
}  // namespace rmpc
