#ifndef BINOC_COMMON_HPP
#define BINOC_COMMON_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace binoc {

// Error raised for invalid user-supplied configuration or arguments.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Error raised for malformed runtime inputs (files, coordinates, ...).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Error raised when an internal invariant is violated; always a bug.
struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}
}  // namespace detail

#define BINOC_CHECK(cond, ...)                                                      \
    do {                                                                            \
        if (!(cond))                                                                \
            throw ::binoc::InternalError(::binoc::detail::concat(                   \
                "invariant failed (", #cond, "): ", __VA_ARGS__));                  \
    } while (0)

// ---------------------------------------------------------------------------
// Logging. Level comes from the BINOC_LOG environment variable:
// "error", "warn", "info" (default), "debug".

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* env = std::getenv("BINOC_LOG");
        if (!env) return LogLevel::Warn;
        std::string s(env);
        if (s == "error") return LogLevel::Error;
        if (s == "warn") return LogLevel::Warn;
        if (s == "info") return LogLevel::Info;
        if (s == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

template <typename... Args>
void log(LogLevel level, Args&&... args) {
    if (level > log_level()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::string line = detail::concat("[", names[static_cast<int>(level)], "] ",
                                      std::forward<Args>(args)..., "\n");
    std::fputs(line.c_str(), stderr);
}

template <typename... Args>
void log_info(Args&&... args) { log(LogLevel::Info, std::forward<Args>(args)...); }
template <typename... Args>
void log_debug(Args&&... args) { log(LogLevel::Debug, std::forward<Args>(args)...); }
template <typename... Args>
void log_warn(Args&&... args) { log(LogLevel::Warn, std::forward<Args>(args)...); }

// ---------------------------------------------------------------------------
// Dyadic sub-intervals of a reference window. Comparisons are exact integer
// arithmetic; conversion to seconds happens only at geometry boundaries.
// level k, index i denotes [i / 2^k, (i+1) / 2^k] of the reference window.

struct DyadicInterval {
    uint32_t level = 0;
    uint64_t index = 0;

    DyadicInterval left() const { return {level + 1, index * 2}; }
    DyadicInterval right() const { return {level + 1, index * 2 + 1}; }

    bool operator==(const DyadicInterval& o) const {
        return level == o.level && index == o.index;
    }

    // True if this interval contains `o` (possibly equal).
    bool contains(const DyadicInterval& o) const {
        if (o.level < level) return false;
        return (o.index >> (o.level - level)) == index;
    }
};

// A dyadic instant: i / 2^k of the reference window, kept unreduced.
struct DyadicTime {
    uint32_t level = 0;
    uint64_t index = 0;

    static DyadicTime start_of(const DyadicInterval& w) { return {w.level, w.index}; }
    static DyadicTime end_of(const DyadicInterval& w) { return {w.level, w.index + 1}; }

    DyadicTime normalized() const {
        DyadicTime t = *this;
        while (t.level > 0 && (t.index & 1) == 0) {
            t.index >>= 1;
            --t.level;
        }
        return t;
    }

    // Exact comparison via cross scaling. Levels stay small (< 32) in practice.
    friend bool operator==(const DyadicTime& a, const DyadicTime& b) {
        uint32_t l = std::max(a.level, b.level);
        return (a.index << (l - a.level)) == (b.index << (l - b.level));
    }
    friend bool operator<(const DyadicTime& a, const DyadicTime& b) {
        uint32_t l = std::max(a.level, b.level);
        return (a.index << (l - a.level)) < (b.index << (l - b.level));
    }
    friend bool operator<=(const DyadicTime& a, const DyadicTime& b) { return a == b || a < b; }
};

// ---------------------------------------------------------------------------
// Minimal fork-join helper. Deterministic: the callable receives disjoint
// index ranges and must write only to its own slots.

inline unsigned default_thread_count() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

inline void parallel_for(size_t n, unsigned threads, const std::function<void(size_t, size_t)>& body) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        body(0, n);
        return;
    }
    unsigned workers = static_cast<unsigned>(std::min<size_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        size_t lo = w * chunk;
        size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace binoc

#endif
