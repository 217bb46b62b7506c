#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace episodic_maml {

// Worker cap from EPISODIC_MAML_THREADS; 0 or absent means auto.
inline int thread_cap_from_env() {
    const char* env = std::getenv("EPISODIC_MAML_THREADS");
    if (!env || !*env) return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 0) return 0;
    return static_cast<int>(v);
}

inline int resolve_threads(int requested = 0) {
    int t = requested > 0 ? requested : thread_cap_from_env();
    if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
    return t > 0 ? t : 1;
}

// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
// must write only to per-index slots so results are identical for any thread
// count. The first exception, if any, is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<std::size_t>(threads, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace episodic_maml
