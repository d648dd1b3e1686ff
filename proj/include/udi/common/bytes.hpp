#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace udi {

/// Little-endian append-only encoder.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
    void raw(std::string_view bytes) { buf_.append(bytes); }

    const std::string& bytes() const { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }

    std::string buf_;
};

/// Bounds-checked little-endian decoder; every read returns nullopt instead of
/// running past the end.
class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::optional<std::uint8_t> u8() { return get<std::uint8_t>(1); }
    std::optional<std::uint16_t> u16() { return get<std::uint16_t>(2); }
    std::optional<std::uint32_t> u32() { return get<std::uint32_t>(4); }
    std::optional<std::uint64_t> u64() { return get<std::uint64_t>(8); }
    std::optional<std::int64_t> i64() {
        auto v = u64();
        if (!v) return std::nullopt;
        return static_cast<std::int64_t>(*v);
    }
    std::optional<std::string_view> raw(std::uint64_t n) {
        if (n > remaining()) return std::nullopt;
        auto out = data_.substr(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return out;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool at_end() const { return pos_ == data_.size(); }

private:
    template <class T>
    std::optional<T> get(int n) {
        if (remaining() < static_cast<std::size_t>(n)) return std::nullopt;
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return static_cast<T>(v);
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace udi
