#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace jccs {

// Error taxonomy shared by all modules. Argument/domain misuse goes through
// std::invalid_argument / std::domain_error; these cover the rest.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StructuralError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SolverLimitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest decimal form that round-trips a double (17 significant digits).
inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string trim(std::string_view s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string_view::npos) return {};
    size_t b = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(a, b - a + 1));
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::vector<std::string> split_char(std::string_view s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline double parse_double(const std::string& tok, const char* what) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw DataError(std::string("cannot parse number '") + tok + "' for " + what);
    return v;
}

inline long parse_long(const std::string& tok, const char* what) {
    char* end = nullptr;
    long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0')
        throw DataError(std::string("cannot parse integer '") + tok + "' for " + what);
    return v;
}

// Index-space parallel loop. Work item i only writes state owned by i, so
// results are identical for any thread count (including 1).
template <typename Fn>
void parallel_for(long n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2 * threads) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            try {
                for (;;) {
                    long i = next.fetch_add(64);
                    if (i >= n) return;
                    long hi = std::min(n, i + 64);
                    for (long k = i; k < hi; ++k) fn(k);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline int env_thread_count() {
    const char* v = std::getenv("JCCS_THREADS");
    if (!v) return 1;
    int n = std::atoi(v);
    return n > 0 ? n : 1;
}

// FNV-1a, used for content-addressing artifact files by config hash.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace jccs
