#include "texsyn/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace texsyn {
namespace {

std::atomic<std::size_t> g_threads{0};

// Below this many multiply-adds a thread launch costs more than it saves.
constexpr std::size_t kMinParallelWork = 1u << 18;

}  // namespace

void set_thread_count(std::size_t n) { g_threads.store(n); }

std::size_t thread_count() {
    const std::size_t n = g_threads.load();
    if (n != 0) return n;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t work_per_item,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
    if (count == 0) return;
    const std::size_t threads = std::min(thread_count(), count);
    if (threads <= 1 || count * work_per_item < kMinParallelWork) {
        fn(0, count);
        return;
    }
    const std::size_t chunk = (count + threads - 1) / threads;
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> workers;
        workers.reserve(threads);
        for (std::size_t begin = 0; begin < count; begin += chunk) {
            const std::size_t end = std::min(count, begin + chunk);
            workers.emplace_back([&, begin, end] {
                try {
                    fn(begin, end);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace texsyn
