// Copyright (c) the VRC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vrc/range_coder.hpp"

#include <algorithm>

namespace vrc {

namespace {
constexpr uint64_t kTopThreshold = 1ull << 56;  // renormalize below this
constexpr unsigned kProbBits = 16;
constexpr unsigned __int128 kLow56Mask = ((unsigned __int128)1 << 56) - 1;
// A valid stream never makes the decoder look more than 8 bytes past the
// encoder's output (its 64-bit lookahead window); anything beyond means the
// stream was truncated.
constexpr int kMaxPadReads = 8;
}  // namespace

void RangeEncoder::shift_low() {
  const uint64_t carry = uint64_t(low_ >> 64);
  const uint8_t top = uint8_t(uint64_t(low_ >> 56) & 0xFF);
  if (carry != 0 || top != 0xFF) {
    uint8_t b = cache_;
    do {
      out_.push_back(uint8_t(b + carry));
      b = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = top;
    cache_size_ = 1;
  } else {
    cache_size_++;  // top byte may still be bumped by a later carry
  }
  low_ = (low_ & kLow56Mask) << 8;
}

void RangeEncoder::encode(uint32_t cum_lo, uint32_t freq) {
  VRC_CHECK_MSG(!finished_, "range encoder already finished");
  VRC_CHECK_MSG(freq > 0 && cum_lo + freq <= kCdfTotal, "range encoder: bad interval");
  range_ >>= kProbBits;
  low_ += (unsigned __int128)(uint64_t(cum_lo)) * range_;
  range_ *= freq;
  while (range_ < kTopThreshold) {
    shift_low();
    range_ <<= 8;
  }
}

void RangeEncoder::encode_symbol(const CdfTable& table, int64_t index) {
  VRC_CHECK_MSG(index >= 0 && index < table.num_symbols(),
                "range encoder: symbol outside table");
  encode(table.cum_at(index), table.freq(index));
}

void RangeEncoder::encode_raw16(uint16_t v) {
  const CdfTable& t = uniform_byte_table();
  encode_symbol(t, (v >> 8) & 0xFF);
  encode_symbol(t, v & 0xFF);
}

Bitstream RangeEncoder::finish() {
  VRC_CHECK_MSG(!finished_, "range encoder already finished");
  finished_ = true;
  // Round low up to a multiple of 2^56 inside [low, low + range); range is at
  // least 2^56 after renormalization, so the target stays in the interval.
  // Only one meaningful byte remains to flush.
  low_ = (low_ + kLow56Mask) & ~kLow56Mask;
  shift_low();
  shift_low();
  Bitstream bs;
  bs.bytes = std::move(out_);
  bs.bit_length = uint64_t(bs.bytes.size()) * 8;
  return bs;
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size)
    : p_(data), end_(data + size) {
  for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | read_byte();
}

uint8_t RangeDecoder::read_byte() {
  if (p_ < end_) return *p_++;
  VRC_CHECK_MSG(++pad_reads_ <= kMaxPadReads, "range decoder: stream exhausted");
  return 0;
}

int64_t RangeDecoder::decode_symbol(const CdfTable& table) {
  const uint64_t q = range_ >> kProbBits;
  uint64_t df = code_ / q;
  // The truncated sliver above q*2^16 never occurs in valid streams; clamp so
  // corrupt input yields garbage symbols instead of out-of-range access.
  if (df >= kCdfTotal) df = kCdfTotal - 1;
  auto it = std::upper_bound(table.cum.begin(), table.cum.end(), uint32_t(df));
  int64_t index = int64_t(it - table.cum.begin()) - 1;
  code_ -= q * table.cum_at(index);
  range_ = q * table.freq(index);
  while (range_ < kTopThreshold) {
    code_ = (code_ << 8) | read_byte();
    range_ <<= 8;
  }
  return index;
}

uint16_t RangeDecoder::decode_raw16() {
  const CdfTable& t = uniform_byte_table();
  uint16_t hi = uint16_t(decode_symbol(t));
  uint16_t lo = uint16_t(decode_symbol(t));
  return uint16_t((hi << 8) | lo);
}

const CdfTable& uniform_byte_table() {
  static const CdfTable table = [] {
    CdfTable t;
    t.symbol_offset = 0;
    t.cum.resize(257);
    for (int i = 0; i <= 256; ++i) t.cum[size_t(i)] = uint32_t(i * 256);
    t.validate();
    return t;
  }();
  return table;
}

Bitstream rc_encode(const std::vector<int64_t>& symbol_indices, const TableProvider& tables) {
  RangeEncoder enc;
  std::vector<int64_t> prefix;
  prefix.reserve(symbol_indices.size());
  for (size_t i = 0; i < symbol_indices.size(); ++i) {
    enc.encode_symbol(tables(i, prefix), symbol_indices[i]);
    prefix.push_back(symbol_indices[i]);
  }
  return enc.finish();
}

std::vector<int64_t> rc_decode(const Bitstream& stream, size_t count,
                               const TableProvider& tables) {
  RangeDecoder dec(stream);
  std::vector<int64_t> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) out.push_back(dec.decode_symbol(tables(i, out)));
  return out;
}

}  // namespace vrc
