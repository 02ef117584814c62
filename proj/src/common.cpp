#include "geo/common.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>

namespace geo {

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    int nw = workers;
    if (nw <= 0) nw = default_workers();
    nw = int(std::min<std::size_t>(std::size_t(nw), n));
    if (nw <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(nw));
    for (int w = 0; w < nw; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

int default_workers() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

LogLevel log_threshold() {
    static LogLevel lvl = [] {
        const char* e = std::getenv("GEO_EXEC_LOG");
        if (!e) return LogLevel::warn;
        std::string s(e);
        if (s == "debug") return LogLevel::debug;
        if (s == "info") return LogLevel::info;
        if (s == "warn") return LogLevel::warn;
        if (s == "error") return LogLevel::error;
        return LogLevel::warn;
    }();
    return lvl;
}

void log(LogLevel level, const std::string& msg) {
    if (int(level) < int(log_threshold())) return;
    static std::mutex mu;
    static const char* names[] = {"DEBUG", "INFO", "WARN", "ERROR"};
    std::lock_guard<std::mutex> lk(mu);
    std::fprintf(stderr, "[%s] %s\n", names[int(level)], msg.c_str());
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace geo
