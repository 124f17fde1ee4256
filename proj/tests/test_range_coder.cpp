#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "tcb/error.hpp"
#include "tcb/range_coder.hpp"
#include "tcb/rng.hpp"
#include "support/oracles.hpp"

using namespace tcb;
using namespace tcb::oracle;

TEST_CASE("build_cdf quantization rules") {
  const std::vector<double> uniform4{0.25, 0.25, 0.25, 0.25};
  CHECK(build_cdf(uniform4).frequencies() == std::vector<std::uint32_t>{16384, 16384, 16384, 16384});

  const std::vector<double> spike{1.0, 0.0};
  CHECK(build_cdf(spike).frequencies() == std::vector<std::uint32_t>{65535, 1});

  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(build_cdf(zeros), ConfigError);
  const std::vector<double> negative{0.5, -0.1};
  CHECK_THROWS_AS(build_cdf(negative), ConfigError);

  // Largest remainder, ties to the lowest index: 3 equal symbols leave one
  // spare unit after flooring, which goes to symbol 0.
  const std::vector<double> thirds{1.0, 1.0, 1.0};
  CHECK(build_cdf(thirds).frequencies() == std::vector<std::uint32_t>{21846, 21845, 21845});
}

TEST_CASE("build_cdf always sums to 2^16 with a floor of one") {
  Rng rng(42);
  for (int t = 0; t < 2000; ++t) {
    const CdfTable table = random_table(rng, 300);
    const auto f = table.frequencies();
    std::uint64_t sum = 0;
    for (auto v : f) {
      CHECK(v >= 1);
      sum += v;
    }
    CHECK(sum == kCdfTotal);
  }
}

TEST_CASE("round trip on random sequences with per-symbol tables") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = rng.integer(0, 400);
    std::vector<CdfTable> tables;
    std::vector<int> symbols;
    for (int i = 0; i < n; ++i) {
      tables.push_back(random_table(rng, 64));
      symbols.push_back(sample(rng, tables.back()));
    }
    const Bitstream bs = rc_encode(symbols, tables);
    CHECK(rc_decode(bs, tables, symbols.size()) == symbols);
  }
}

TEST_CASE("uniform 256-symbol table costs 8 bits per symbol plus the flush") {
  // 1000 symbols x 8 bits = 1000 bytes of information; the flush adds at
  // most 4 bytes (32 bits), hence the [1000, 1006] window.
  Rng rng(9);
  const CdfTable table = uniform_cdf(8);
  std::vector<int> symbols(1000);
  for (int& s : symbols) s = rng.integer(0, 255);
  std::vector<CdfTable> tables(symbols.size(), table);
  const Bitstream bs = rc_encode(symbols, tables);
  CHECK(bs.bytes.size() >= 1000);
  CHECK(bs.bytes.size() <= 1006);
  CHECK(rc_decode(bs, tables, symbols.size()) == symbols);
}

TEST_CASE("empty sequence produces an empty payload") {
  const std::vector<int> none;
  const std::vector<CdfTable> tables;
  const Bitstream bs = rc_encode(none, tables);
  CHECK(bs.bytes.empty());
  CHECK(rc_decode(bs, tables, 0).empty());
}

TEST_CASE("coding efficiency against self-information") {
  Rng rng(77);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t n = 100000;
    std::vector<CdfTable> palette;
    for (int i = 0; i < 16; ++i) palette.push_back(random_table(rng, 200));
    std::vector<std::uint32_t> idx(n);
    std::vector<int> symbols(n);
    std::vector<CdfTable> per_symbol;
    per_symbol.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = static_cast<std::uint32_t>(rng.integer(0, 15));
      symbols[i] = sample(rng, palette[idx[i]]);
      per_symbol.push_back(palette[idx[i]]);
    }
    const Bitstream bs = rc_encode(symbols, palette, idx);
    const double info = self_information(symbols, per_symbol);
    CHECK(static_cast<double>(bs.bits()) <= info * 1.001 + 32.0);
    CHECK(rc_decode(bs, palette, idx, n) == symbols);
  }
}

TEST_CASE("error paths") {
  const CdfTable t = uniform_cdf(2);
  const std::vector<CdfTable> tables{t};
  const std::vector<int> bad{4};
  CHECK_THROWS_AS(rc_encode(bad, tables), ConfigError);

  std::vector<int> symbols(200, 3);
  std::vector<CdfTable> many(200, t);
  Bitstream bs = rc_encode(symbols, many);
  bs.bytes.resize(bs.bytes.size() / 2);
  CHECK_THROWS_AS(rc_decode(bs, many, symbols.size()), FormatError);

  CHECK_THROWS_AS(CdfTable({0, 5, 5, 65536}), ConfigError);
  CHECK_THROWS_AS(CdfTable({0, 65535}), ConfigError);
}

TEST_CASE("raw bits and exp-golomb round trip") {
  Rng rng(5);
  RangeEncoder enc;
  std::vector<std::pair<std::uint32_t, int>> raw;
  std::vector<std::uint32_t> eg;
  for (int i = 0; i < 500; ++i) {
    const int nb = rng.integer(1, 16);
    const auto v = static_cast<std::uint32_t>(rng.next() & ((1u << nb) - 1));
    raw.emplace_back(v, nb);
    enc.encode_bits(v, nb);
    const auto g = static_cast<std::uint32_t>(rng.next() >> rng.integer(33, 63));
    eg.push_back(g);
    enc.encode_exp_golomb(g);
  }
  const Bitstream bs = enc.finish();
  RangeDecoder dec(bs.bytes);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(dec.decode_bits(raw[i].second) == raw[i].first);
    CHECK(dec.decode_exp_golomb() == eg[i]);
  }
  CHECK(dec.exhausted());
}

// Golden vectors pin the payload byte layout for other implementations.
// Regenerate with TCB_REGEN_GOLDEN=1 only when the format intentionally changes.
TEST_CASE("golden vectors") {
  const std::string path = std::string(TCB_TEST_DATA_DIR) + "/rc_golden.json";
  if (std::getenv("TCB_REGEN_GOLDEN")) {
    Rng rng(31337);
    nlohmann::json cases = nlohmann::json::array();
    for (int c = 0; c < 6; ++c) {
      std::vector<CdfTable> palette;
      for (int i = 0; i < 3; ++i) palette.push_back(random_table(rng, 12));
      const int n = c == 0 ? 0 : rng.integer(1, 60);
      std::vector<std::uint32_t> idx(n);
      std::vector<int> symbols(n);
      for (int i = 0; i < n; ++i) {
        idx[i] = static_cast<std::uint32_t>(rng.integer(0, 2));
        symbols[i] = sample(rng, palette[idx[i]]);
      }
      nlohmann::json tables = nlohmann::json::array();
      for (const auto& t : palette) tables.push_back(t.cumulative());
      cases.push_back({{"tables", tables},
                       {"table_index", idx},
                       {"symbols", symbols},
                       {"bytes", rc_encode(symbols, palette, idx).bytes}});
    }
    std::ofstream(path) << cases.dump(1) << "\n";
  }
  std::ifstream in(path);
  REQUIRE(in.good());
  const auto cases = nlohmann::json::parse(in);
  REQUIRE(cases.size() == 6);
  for (const auto& c : cases) {
    std::vector<CdfTable> palette;
    for (const auto& t : c["tables"]) palette.emplace_back(t.get<std::vector<std::uint32_t>>());
    const auto idx = c["table_index"].get<std::vector<std::uint32_t>>();
    const auto symbols = c["symbols"].get<std::vector<int>>();
    const auto expected = c["bytes"].get<std::vector<std::uint8_t>>();
    CHECK(rc_encode(symbols, palette, idx).bytes == expected);
    CHECK(rc_decode(Bitstream{expected}, palette, idx, symbols.size()) == symbols);
  }
}
