#include "tcb/range_coder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "tcb/error.hpp"

namespace tcb {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

CdfTable::CdfTable(std::vector<std::uint32_t> cumulative) : cum_(std::move(cumulative)) {
  if (cum_.size() < 2) throw ConfigError("cdf table needs at least one symbol");
  if (cum_.front() != 0 || cum_.back() != kCdfTotal) throw ConfigError("cdf table must span [0, 2^16]");
  for (std::size_t i = 1; i < cum_.size(); ++i)
    if (cum_[i] <= cum_[i - 1]) throw ConfigError("cdf table must be strictly increasing");
}

std::vector<std::uint32_t> CdfTable::frequencies() const {
  std::vector<std::uint32_t> f(cum_.size() - 1);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = cum_[i + 1] - cum_[i];
  return f;
}

int CdfTable::find(std::uint32_t target) const {
  auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
  return static_cast<int>(it - cum_.begin()) - 1;
}

double CdfTable::cost_bits(int s) const {
  return -std::log2(static_cast<double>(frequency(s)) / static_cast<double>(kCdfTotal));
}

CdfTable build_cdf(std::span<const double> pmf, int precision) {
  if (precision != kCdfPrecision) throw ConfigError("only 16-bit cdf precision is supported");
  const std::size_t n = pmf.size();
  if (n == 0) throw ConfigError("empty pmf");
  if (n > kCdfTotal) throw ConfigError("pmf has more symbols than the cdf precision allows");
  double sum = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("pmf entries must be finite and non-negative");
    sum += p;
  }
  if (!(sum > 0.0)) throw ConfigError("all-zero pmf");

  const std::uint32_t spare = kCdfTotal - static_cast<std::uint32_t>(n);
  std::vector<std::uint32_t> freq(n);
  std::vector<double> remainder(n);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = pmf[i] / sum * spare;
    const double whole = std::floor(exact);
    freq[i] = 1 + static_cast<std::uint32_t>(whole);
    remainder[i] = exact - whole;
    assigned += freq[i];
  }
  // Rounding in the division can overshoot by a unit; take it back from the
  // largest frequencies first.
  while (assigned > kCdfTotal) {
    auto it = std::max_element(freq.begin(), freq.end());
    --*it;
    --assigned;
  }
  if (assigned < kCdfTotal) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    std::size_t k = 0;
    while (assigned < kCdfTotal) {
      ++freq[order[k % n]];
      ++assigned;
      ++k;
    }
  }

  std::vector<std::uint32_t> cum(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + freq[i];
  return CdfTable(std::move(cum));
}

CdfTable uniform_cdf(int bits) {
  if (bits < 0 || bits > kCdfPrecision) throw ConfigError("uniform table width out of range");
  const std::uint32_t n = 1u << bits;
  std::vector<std::uint32_t> cum(n + 1);
  for (std::uint32_t i = 0; i <= n; ++i) cum[i] = i << (kCdfPrecision - bits);
  return CdfTable(std::move(cum));
}

// --- encoder -------------------------------------------------------------

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      // The very first byte is always zero and is implied by the decoder.
      if (!first_) out_.push_back(static_cast<std::uint8_t>(temp + carry));
      first_ = false;
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode_interval(std::uint32_t cum_low, std::uint32_t cum_high) {
  const std::uint64_t r = range_;
  const std::uint64_t lo = (r * cum_low) >> kCdfPrecision;
  const std::uint64_t hi = (r * cum_high) >> kCdfPrecision;
  low_ += lo;
  range_ = static_cast<std::uint32_t>(hi - lo);
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
  ++symbols_;
}

void RangeEncoder::encode(const CdfTable& table, int symbol) {
  if (symbol < 0 || symbol >= table.symbols()) throw ConfigError("symbol out of range for its cdf table");
  encode_interval(table.low(symbol), table.high(symbol));
}

void RangeEncoder::encode_bits(std::uint32_t value, int nbits) {
  if (nbits <= 0) return;
  if (nbits > kCdfPrecision) throw ConfigError("at most 16 raw bits per call");
  if (value >> nbits) throw ConfigError("raw value does not fit in the bit width");
  const int shift = kCdfPrecision - nbits;
  encode_interval(value << shift, (value + 1) << shift);
}

void RangeEncoder::encode_exp_golomb(std::uint32_t value) {
  const std::uint64_t v = std::uint64_t{value} + 1;
  const int len = std::bit_width(v);
  // Unary length prefix: (len-1) zeros then a one.
  for (int i = 0; i < len - 1; ++i) encode_bits(0, 1);
  encode_bits(1, 1);
  int remaining = len - 1;
  while (remaining > 0) {
    const int chunk = std::min(remaining, 16);
    remaining -= chunk;
    encode_bits(static_cast<std::uint32_t>((v >> remaining) & ((1u << chunk) - 1)), chunk);
  }
}

Bitstream RangeEncoder::finish() {
  Bitstream out;
  if (symbols_ == 0) return out;
  for (int i = 0; i < 5; ++i) shift_low();
  out.bytes = std::move(out_);
  return out;
}

// --- decoder -------------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> payload) : data_(payload) {}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= data_.size()) throw FormatError("truncated stream");
  return data_[pos_++];
}

std::uint32_t RangeDecoder::target() {
  if (!started_) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    started_ = true;
  }
  if (code_ >= range_) throw FormatError("corrupted stream");
  return static_cast<std::uint32_t>((((std::uint64_t{code_} + 1) << kCdfPrecision) - 1) / range_);
}

void RangeDecoder::consume(std::uint32_t cum_low, std::uint32_t cum_high) {
  const std::uint64_t r = range_;
  const std::uint64_t lo = (r * cum_low) >> kCdfPrecision;
  const std::uint64_t hi = (r * cum_high) >> kCdfPrecision;
  code_ -= static_cast<std::uint32_t>(lo);
  range_ = static_cast<std::uint32_t>(hi - lo);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

int RangeDecoder::decode(const CdfTable& table) {
  const std::uint32_t t = target();
  const int s = table.find(t);
  consume(table.low(s), table.high(s));
  return s;
}

std::uint32_t RangeDecoder::decode_bits(int nbits) {
  if (nbits <= 0) return 0;
  if (nbits > kCdfPrecision) throw ConfigError("at most 16 raw bits per call");
  const int shift = kCdfPrecision - nbits;
  const std::uint32_t v = target() >> shift;
  consume(v << shift, (v + 1) << shift);
  return v;
}

std::uint32_t RangeDecoder::decode_exp_golomb() {
  int zeros = 0;
  while (decode_bits(1) == 0) {
    if (++zeros > 32) throw FormatError("corrupted exp-golomb prefix");
  }
  std::uint64_t v = 1;
  int remaining = zeros;
  while (remaining > 0) {
    const int chunk = std::min(remaining, 16);
    remaining -= chunk;
    v = (v << chunk) | decode_bits(chunk);
  }
  if (v - 1 > 0xFFFFFFFFull) throw FormatError("corrupted exp-golomb value");
  return static_cast<std::uint32_t>(v - 1);
}

// --- batch helpers -------------------------------------------------------

Bitstream rc_encode(std::span<const int> symbols, std::span<const CdfTable> tables,
                    std::span<const std::uint32_t> table_index) {
  if (table_index.size() != symbols.size()) throw ConfigError("one table index per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (table_index[i] >= tables.size()) throw ConfigError("table index out of range");
    enc.encode(tables[table_index[i]], symbols[i]);
  }
  return enc.finish();
}

Bitstream rc_encode(std::span<const int> symbols, std::span<const CdfTable> tables) {
  if (tables.size() != symbols.size()) throw ConfigError("one cdf table per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(tables[i], symbols[i]);
  return enc.finish();
}

std::vector<int> rc_decode(const Bitstream& stream, std::span<const CdfTable> tables,
                           std::span<const std::uint32_t> table_index, std::size_t n) {
  if (table_index.size() < n) throw ConfigError("one table index per symbol required");
  RangeDecoder dec(stream.bytes);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (table_index[i] >= tables.size()) throw ConfigError("table index out of range");
    out[i] = dec.decode(tables[table_index[i]]);
  }
  if (!dec.exhausted()) throw FormatError("trailing bytes after range-coded payload");
  return out;
}

std::vector<int> rc_decode(const Bitstream& stream, std::span<const CdfTable> tables, std::size_t n) {
  if (tables.size() < n) throw ConfigError("one cdf table per symbol required");
  RangeDecoder dec(stream.bytes);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = dec.decode(tables[i]);
  if (!dec.exhausted()) throw FormatError("trailing bytes after range-coded payload");
  return out;
}

}  // namespace tcb
