#include "hymirec/threadpool.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hymirec {
namespace {

std::atomic<int> g_cap{0};

int effective_threads() {
    int cap = g_cap.load(std::memory_order_relaxed);
    if (cap <= 0) {
        if (const char* env = std::getenv("HYMIREC_THREADS")) cap = std::atoi(env);
    }
    if (cap <= 0) cap = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, cap);
}

}  // namespace

void set_thread_cap(int n) { g_cap.store(n, std::memory_order_relaxed); }
int thread_cap() { return effective_threads(); }

std::size_t chunk_count(std::size_t n, std::size_t grain) {
    if (n == 0) return 0;
    if (grain == 0) grain = 1;
    return (n + grain - 1) / grain;
}

void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (grain == 0) grain = 1;
    const std::size_t chunks = chunk_count(n, grain);
    const int workers = std::min<std::size_t>(effective_threads(), chunks);

    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c)
            fn(c * grain, std::min(n, (c + 1) * grain));
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    auto body = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= chunks) return;
            try {
                fn(c * grain, std::min(n, (c + 1) * grain));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace hymirec
