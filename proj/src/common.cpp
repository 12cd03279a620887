#include "searth/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace searth {

const char* io_code_name(IoCode c) {
    switch (c) {
        case IoCode::open_failed: return "open_failed";
        case IoCode::bad_magic: return "bad_magic";
        case IoCode::bad_version: return "bad_version";
        case IoCode::bad_dtype: return "bad_dtype";
        case IoCode::bad_dims: return "bad_dims";
        case IoCode::truncated: return "truncated";
        case IoCode::malformed: return "malformed";
    }
    return "unknown";
}

int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("SEARTH_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return std::min(v, 64);
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(std::min(hw, 16u));
    }();
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int nt = thread_count();
    if (nt == 1 || n < 2 * nt) {
        fn(0, n);
        return;
    }
    const int64_t chunk = (n + nt - 1) / nt;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        const int64_t begin = t * chunk;
        const int64_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        workers.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& w : workers) w.join();
}

}  // namespace searth
