#include "rxpp/util.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace rxpp {

int thread_cap() {
    const char* env = std::getenv("RXPP_THREADS");
    if (env != nullptr) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {
thread_local bool inside_parallel_for = false;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    int workers = std::min<int>(thread_cap(), static_cast<int>(n));
    // nested loops run serially: the outer loop already owns the workers
    if (workers <= 1 || n < 2 || inside_parallel_for) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<size_t> next{0};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            inside_parallel_for = true;
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace rxpp
