#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace uniadet {

/// Runs body(i) for i in [0, n) across the OpenMP team. The first exception
/// thrown by any iteration is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    std::exception_ptr failure;
    std::mutex guard;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < count; ++i) {
        {
            std::lock_guard lock(guard);
            if (failure) continue;
        }
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(guard);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

/// Sets the worker count for subsequent parallel regions; 0 keeps the runtime default.
void set_thread_count(int threads);
int thread_count();

}  // namespace uniadet
