#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace celm::log {

using Sink = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& mutex() {
    static std::mutex m;
    return m;
}
inline Sink& sink() {
    static Sink s = [](const std::string& msg) { std::clog << "warning: " << msg << '\n'; };
    return s;
}
}  // namespace detail

/// Replaces the warning sink and returns the previous one.
inline Sink set_sink(Sink s) {
    std::lock_guard lock(detail::mutex());
    Sink old = std::move(detail::sink());
    detail::sink() = std::move(s);
    return old;
}

inline void warn(const std::string& msg) {
    std::lock_guard lock(detail::mutex());
    if (detail::sink()) detail::sink()(msg);
}

/// Restores the previous sink on scope exit.
class ScopedSink {
public:
    explicit ScopedSink(Sink s) : previous_(set_sink(std::move(s))) {}
    ~ScopedSink() { set_sink(std::move(previous_)); }
    ScopedSink(const ScopedSink&) = delete;
    ScopedSink& operator=(const ScopedSink&) = delete;

private:
    Sink previous_;
};

}  // namespace celm::log
