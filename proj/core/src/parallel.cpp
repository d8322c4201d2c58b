#include "follisim/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "follisim/errors.hpp"

namespace follisim {

namespace {
std::atomic<int> g_threads{0};
} // namespace

void set_parallel_threads(int n) {
    if (n < 0) throw ConfigError("thread count must be non-negative");
    g_threads.store(n, std::memory_order_relaxed);
}

int parallel_threads() { return g_threads.load(std::memory_order_relaxed); }

int resolve_parallel_threads() {
    int n = g_threads.load(std::memory_order_relaxed);
    if (n == 0) {
        if (const char* env = std::getenv("FOLLICLE_THREADS")) {
            try {
                n = std::stoi(env);
            } catch (const std::exception&) {
                throw ConfigError("FOLLICLE_THREADS must be an integer");
            }
            if (n < 0) throw ConfigError("FOLLICLE_THREADS must be non-negative");
        }
    }
    if (n == 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return n < 1 ? 1 : n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t setting = static_cast<std::size_t>(resolve_parallel_threads());
    const std::size_t workers = std::min(setting, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = n * w / workers;
        const std::size_t hi = n * (w + 1) / workers;
        pool.emplace_back([&errors, &body, w, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace follisim
