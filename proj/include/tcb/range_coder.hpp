#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tcb {

inline constexpr int kCdfPrecision = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecision;

/// Quantized cumulative distribution: cumulative[0] == 0, cumulative.back()
/// == 2^16, strictly increasing, so every symbol has frequency >= 1.
class CdfTable {
 public:
  CdfTable() = default;
  explicit CdfTable(std::vector<std::uint32_t> cumulative);

  int symbols() const { return static_cast<int>(cum_.size()) - 1; }
  std::uint32_t low(int s) const { return cum_[s]; }
  std::uint32_t high(int s) const { return cum_[s + 1]; }
  std::uint32_t frequency(int s) const { return cum_[s + 1] - cum_[s]; }
  const std::vector<std::uint32_t>& cumulative() const { return cum_; }
  std::vector<std::uint32_t> frequencies() const;

  /// Largest s with cumulative[s] <= target.
  int find(std::uint32_t target) const;

  /// -log2(frequency / 2^16).
  double cost_bits(int s) const;

  bool operator==(const CdfTable&) const = default;

 private:
  std::vector<std::uint32_t> cum_;
};

/// Quantize a pmf to 2^16 integer frequencies with a floor of 1 per symbol.
/// The pmf is renormalized by its sum; leftover units go to the largest
/// remainders, ties to the lowest index.
CdfTable build_cdf(std::span<const double> pmf, int precision = kCdfPrecision);

/// Table that spends exactly `bits` bits on each of its 2^bits symbols.
CdfTable uniform_cdf(int bits);

/// Compressed bytes plus their length in bits.
struct Bitstream {
  std::vector<std::uint8_t> bytes;
  std::uint64_t bits() const { return 8 * static_cast<std::uint64_t>(bytes.size()); }
};

/// Carry-propagating range encoder with a 32-bit range and 16-bit
/// probabilities. Interval splits are computed as (range * cum) >> 16 in
/// 64-bit integer arithmetic, so the only loss against the ideal code length
/// is the final flush (at most 32 bits) plus < 2^-24 relative per symbol.
class RangeEncoder {
 public:
  void encode(const CdfTable& table, int symbol);
  /// Encode the interval [cum_low, cum_high) of a 2^16 total.
  void encode_interval(std::uint32_t cum_low, std::uint32_t cum_high);
  /// Equiprobable value in [0, 2^nbits), nbits <= 16.
  void encode_bits(std::uint32_t value, int nbits);
  /// Exp-Golomb (order 0) code of a non-negative integer.
  void encode_exp_golomb(std::uint32_t value);

  /// Flush and return the payload. The encoder must not be used afterwards.
  Bitstream finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool first_ = true;
  std::uint64_t symbols_ = 0;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> payload);

  int decode(const CdfTable& table);
  std::uint32_t decode_bits(int nbits);
  std::uint32_t decode_exp_golomb();

  /// Bytes consumed so far.
  std::size_t consumed() const { return pos_; }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  std::uint8_t next_byte();
  void consume(std::uint32_t cum_low, std::uint32_t cum_high);
  std::uint32_t target();

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  bool started_ = false;
};

/// Encode symbols[i] with tables[indices[i]].
Bitstream rc_encode(std::span<const int> symbols, std::span<const CdfTable> tables,
                    std::span<const std::uint32_t> table_index);
/// Encode symbols[i] with tables[i].
Bitstream rc_encode(std::span<const int> symbols, std::span<const CdfTable> tables);

std::vector<int> rc_decode(const Bitstream& stream, std::span<const CdfTable> tables,
                           std::span<const std::uint32_t> table_index, std::size_t n);
std::vector<int> rc_decode(const Bitstream& stream, std::span<const CdfTable> tables, std::size_t n);

}  // namespace tcb
