#include "parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace repsample {

std::size_t thread_count() {
    const char *env = std::getenv("REPSAMPLE_THREADS");
    if (!env || !*env) return 1;
    char *end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) return 1;
    return static_cast<std::size_t>(std::min<long>(v, 256));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body) {
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t begin = n * w / workers;
            const std::size_t end = n * (w + 1) / workers;
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto &t : pool) t.join();
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace repsample
