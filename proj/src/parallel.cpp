#include "belief/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace belief {

namespace {

std::size_t default_jobs() {
    if (const char *env = std::getenv("BELIEF_JOBS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) {
            return static_cast<std::size_t>(v);
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::atomic<std::size_t> &job_count() {
    static std::atomic<std::size_t> count{default_jobs()};
    return count;
}

thread_local bool tInsideWorker = false;

} // namespace

std::size_t jobs() { return job_count().load(); }

void set_jobs(std::size_t n) { job_count().store(n == 0 ? default_jobs() : n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body) {
    // Nested loops run serially on the worker that reached them.
    const std::size_t workers = tInsideWorker ? 1 : std::min(jobs(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failureMutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            tInsideWorker = true;
            try {
                for (std::size_t i = begin; i < end; ++i) {
                    body(i);
                }
            } catch (...) {
                std::lock_guard lock(failureMutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto &t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace belief
