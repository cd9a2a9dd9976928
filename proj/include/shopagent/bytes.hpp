#pragma once

// Little-endian encoding helpers shared by checkpoints and wire frames.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "shopagent/common.hpp"

namespace shopagent::bytes {

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u8(std::uint8_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return uint<std::uint8_t>(); }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return std::string(raw(u32())); }

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ContractViolation("truncated binary record");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace shopagent::bytes
