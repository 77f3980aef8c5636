#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace provenance {

using ImageId = std::uint64_t;
using FeatureId = std::uint64_t;

inline constexpr std::size_t kDescriptorDim = 64;
inline constexpr FeatureId kSentinelFeature = std::numeric_limits<FeatureId>::max();
inline constexpr ImageId kSentinelImage = std::numeric_limits<ImageId>::max();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when a file does not carry the expected magic or version.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Little-endian binary streams. Values are encoded byte by byte so the files
// are identical regardless of host byte order.
// ---------------------------------------------------------------------------

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    template <typename T>
        requires std::is_integral_v<T>
    void put(T v) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(v);
        char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf[i] = static_cast<char>((u >> (8 * i)) & 0xFFu);
        }
        out_.write(buf, sizeof(T));
    }

    void put(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void put(double v) { put(std::bit_cast<std::uint64_t>(v)); }

    void put_floats(std::span<const float> values) {
        for (float v : values) put(v);
    }

    void put_bytes(std::span<const std::uint8_t> bytes) {
        out_.write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()));
    }

    void put_magic(const char (&magic)[5]) { out_.write(magic, 4); }

    bool ok() const { return static_cast<bool>(out_); }

private:
    std::ostream& out_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    template <typename T>
        requires std::is_integral_v<T>
    T get() {
        unsigned char buf[sizeof(T)];
        read_raw(buf, sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
        }
        return static_cast<T>(u);
    }

    float get_float() { return std::bit_cast<float>(get<std::uint32_t>()); }
    double get_double() { return std::bit_cast<double>(get<std::uint64_t>()); }

    void get_floats(std::span<float> out) {
        for (float& v : out) v = get_float();
    }

    void get_bytes(std::span<std::uint8_t> out) { read_raw(out.data(), out.size()); }

    void expect_magic(const char (&magic)[5], const std::string& what) {
        char buf[4] = {};
        in_.read(buf, 4);
        if (!in_ || std::memcmp(buf, magic, 4) != 0) {
            throw FormatError(what + ": bad magic (expected \"" + std::string(magic, 4) + "\")");
        }
    }

private:
    void read_raw(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (!in_) throw FormatError("unexpected end of file");
    }

    std::istream& in_;
};

// ---------------------------------------------------------------------------
// Concurrency helpers
// ---------------------------------------------------------------------------

/// Bounded multi-producer multi-consumer FIFO. `close()` wakes all waiters;
/// `pop()` returns nullopt once the queue is closed and drained.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

    bool push(T value) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(value));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T value = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return value;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::size_t capacity_;
    std::deque<T> items_;
    bool closed_ = false;
    std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
};

/// Runs fn(i) for i in [0, n) over `workers` threads. Work is handed out in
/// index order; results must be written to per-index slots by the caller so
/// the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    if (n == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(n);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline std::size_t default_workers() {
    return std::max<unsigned>(1, std::thread::hardware_concurrency());
}

}  // namespace provenance
