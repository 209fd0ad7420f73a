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

#ifndef VRC_RANGE_CODER_HPP_
#define VRC_RANGE_CODER_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "vrc/cdf.hpp"

namespace vrc {

// Serialized coder output. The coder is byte aligned, so bit_length is exact.
struct Bitstream {
  std::vector<uint8_t> bytes;
  uint64_t bit_length = 0;
};

// Integer range coder: 64-bit range state, 16-bit probability precision,
// byte-wise renormalization with carry propagation. Encoder and decoder share
// no floating-point computation.
class RangeEncoder {
 public:
  // Encodes one symbol occupying [cum_lo, cum_lo + freq) of the 2^16 total.
  void encode(uint32_t cum_lo, uint32_t freq);
  void encode_symbol(const CdfTable& table, int64_t index);
  // Encodes 16 raw bits via two uniform byte symbols.
  void encode_raw16(uint16_t v);

  Bitstream finish();

 private:
  void shift_low();

  unsigned __int128 low_ = 0;
  uint64_t range_ = ~0ull;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
  std::vector<uint8_t> out_;
  bool finished_ = false;
};

class RangeDecoder {
 public:
  RangeDecoder(const uint8_t* data, size_t size);
  explicit RangeDecoder(const Bitstream& bs) : RangeDecoder(bs.bytes.data(), bs.bytes.size()) {}

  // Decodes one symbol against `table`; returns the table index.
  int64_t decode_symbol(const CdfTable& table);
  uint16_t decode_raw16();

 private:
  uint8_t read_byte();

  uint64_t range_ = ~0ull;
  uint64_t code_ = 0;
  const uint8_t* p_ = nullptr;
  const uint8_t* end_ = nullptr;
  int pad_reads_ = 0;
};

// Uniform 256-symbol table used for raw byte bypass.
const CdfTable& uniform_byte_table();

// Convenience wrappers. The provider is called once per symbol, in order; at
// decode time it sees the already-decoded prefix (the autoregressive contract).
using TableProvider = std::function<const CdfTable&(size_t index, const std::vector<int64_t>& prefix)>;

Bitstream rc_encode(const std::vector<int64_t>& symbol_indices, const TableProvider& tables);
std::vector<int64_t> rc_decode(const Bitstream& stream, size_t count, const TableProvider& tables);

}  // namespace vrc

#endif  // VRC_RANGE_CODER_HPP_
