#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

namespace rpf {

/// Worker count from RPF_THREADS, else hardware concurrency (at least 1).
int default_thread_count();

/// Evaluates fn(i) for i in [0, n) and returns results in index order. Output
/// is independent of the thread count; the lowest-index exception is rethrown.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, int threads, Fn&& fn) {
    std::vector<std::optional<T>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    int const count = std::clamp<int>(threads, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
    if (count == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    }
    for (auto const& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace rpf
