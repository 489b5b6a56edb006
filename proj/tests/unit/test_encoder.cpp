#include "doctest.h"

#include <cmath>
#include <map>
#include <sstream>

#include "belforge/encoder.hpp"
#include "belforge/random.hpp"
#include "oracles.hpp"

using namespace belforge;
using belforge::testing::rel_error;

namespace {

// Reference FNV-1a, written from the published constants.
std::uint64_t oracle_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Splits UTF-8 into code points by lead bytes, pads with ^ and $, and
// counts every n-gram bucket.
std::map<std::uint32_t, double> oracle_features(const std::string& text, int n_min, int n_max,
                                                std::size_t buckets) {
  std::vector<std::string> cps = {"^"};
  for (std::size_t i = 0; i < text.size();) {
    std::size_t j = i + 1;
    while (j < text.size() && (static_cast<unsigned char>(text[j]) & 0xC0) == 0x80) ++j;
    cps.push_back(text.substr(i, j - i));
    i = j;
  }
  cps.push_back("$");
  std::map<std::uint32_t, double> out;
  for (int n = n_min; n <= n_max; ++n) {
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      std::string g;
      for (int k = 0; k < n; ++k) g += cps[i + k];
      out[static_cast<std::uint32_t>(oracle_fnv(g) % buckets)] += 1.0;
    }
  }
  return out;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.buckets = 97;
  c.hidden = 8;
  c.dim = 5;
  return c;
}

EncoderParams random_params(std::uint64_t seed, const EncoderConfig& c) {
  EncoderParams p = init_params(seed, c);
  Rng rng = make_rng(seed, 77);
  for (double& b : p.b1) b = uniform(rng, -0.3, 0.3);
  for (double& b : p.b2) b = uniform(rng, -0.3, 0.3);
  return p;
}

double objective(const EncoderParams& p, const std::string& text, const std::vector<double>& up) {
  const Embedding e = encode(p, text);
  double s = 0;
  for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * up[i];
  return s;
}

}  // namespace

TEST_CASE("featurize examples") {
  EncoderConfig c;
  c.n_min = c.n_max = 3;
  const auto ab = featurize("ab", c);
  CHECK(ab.nnz() >= 1);
  CHECK(ab.nnz() <= 2);
  double total = 0;
  for (double v : ab.value) total += v;
  CHECK(total == 2.0);
  CHECK(featurize("ab", c) == ab);

  const auto a = featurize("a", c);
  CHECK(a.nnz() == 1);
  CHECK(a.value[0] == 1.0);
  CHECK(a.index[0] == oracle_fnv("^a$") % c.buckets);

  CHECK_THROWS_AS(featurize("", c), UnencodableError);
  CHECK_THROWS_AS(featurize(" \t ", c), UnencodableError);
}

TEST_CASE("featurize matches an independent n-gram oracle") {
  const std::vector<std::string> texts = {"hartinfarct", "Patiënt", "ĳs", "pijn op de borst", "漢字😀", "x"};
  for (int lowercase = 0; lowercase < 2; ++lowercase) {
    EncoderConfig c;
    c.buckets = 1009;
    c.lowercase = lowercase;
    for (const auto& t : texts) {
      const auto f = featurize(t, c);
      const auto want = oracle_features(t == "Patiënt" && lowercase ? "patiënt" : t, c.n_min, c.n_max, c.buckets);
      REQUIRE(f.nnz() == want.size());
      std::size_t i = 0;
      for (const auto& [idx, v] : want) {
        CHECK(f.index[i] == idx);
        CHECK(f.value[i] == v);
        ++i;
      }
    }
  }
}

TEST_CASE("featurize trims") {
  EncoderConfig c;
  CHECK(featurize("  koorts ", c) == featurize("koorts", c));
}

TEST_CASE("init_params determinism and shapes") {
  const auto c = small_config();
  const auto a = init_params(1, c);
  CHECK(a == init_params(1, c));
  CHECK_FALSE(a == init_params(2, c));
  CHECK(a.w1.size() == c.buckets * c.hidden);
  CHECK(a.w2.size() == c.dim * c.hidden);
  const double bound = 1 / std::sqrt(double(c.buckets));
  for (double w : a.w1) CHECK(std::abs(w) <= bound);
  for (double b : a.b1) CHECK(b == 0.0);
}

TEST_CASE("encode: zero params, unit norm, determinism") {
  const auto c = small_config();
  const auto z = encode(EncoderParams::zeros(c), "koorts");
  double n = 0;
  for (double v : z) n += v * v;
  CHECK(std::sqrt(n) < kMinNorm);

  const auto p = random_params(3, c);
  for (const char* t : {"koorts", "a", "pijn op de borst"}) {
    const auto e = encode(p, t);
    double s = 0;
    for (double v : e) s += v * v;
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-9);
    CHECK(e == encode(p, t));
  }
  CHECK_THROWS_AS(encode(p, ""), UnencodableError);
}

TEST_CASE("encode_backward: zero upstream and closed form without normalization") {
  auto c = small_config();
  const auto p = random_params(4, c);
  const std::vector<double> zero(c.dim, 0.0);
  CHECK(encode_backward(p, "koorts", zero) == EncoderParams::zeros(c));

  c.normalize_output = false;
  EncoderParams q = p;
  q.config = c;
  std::vector<double> up(c.dim);
  for (std::size_t i = 0; i < c.dim; ++i) up[i] = 0.1 * double(i) - 0.2;
  const auto g = encode_backward(q, "koorts", up);
  const auto pass = forward(q, "koorts");
  for (std::size_t r = 0; r < c.dim; ++r) {
    CHECK(g.b2[r] == doctest::Approx(up[r]).epsilon(1e-12));
    for (std::size_t h = 0; h < c.hidden; ++h) CHECK(g.W2(r, h) == doctest::Approx(up[r] * pass.hidden[h]).epsilon(1e-12));
  }
}

TEST_CASE("property: encode_backward matches central finite differences") {
  const auto c = small_config();
  const std::vector<std::string> texts = {"koorts", "hartinfarct", "pijn op de borst", "ëczeem"};
  double worst = 0;
  for (int draw = 0; draw < 50; ++draw) {
    const auto p = random_params(100 + draw, c);
    Rng rng = make_rng(draw, 5);
    const std::string& t = texts[draw % texts.size()];
    std::vector<double> up(c.dim);
    for (double& u : up) u = uniform(rng, -1, 1);
    const auto g = encode_backward(p, t, up);
    const auto pass = forward(p, t);
    auto check = [&](std::vector<double> EncoderParams::*field, std::size_t i) {
      EncoderParams plus = p, minus = p;
      const double h = 1e-6;
      (plus.*field)[i] += h;
      (minus.*field)[i] -= h;
      const double fd = (objective(plus, t, up) - objective(minus, t, up)) / (2 * h);
      const double e = rel_error((g.*field)[i], fd, 1e-4);
      worst = std::max(worst, e);
      CHECK(e < 1e-4);
    };
    for (std::size_t f : pass.features.index)
      for (std::size_t r = 0; r < c.hidden; ++r) check(&EncoderParams::w1, f * c.hidden + r);
    for (std::size_t i = 0; i < c.hidden; ++i) check(&EncoderParams::b1, i);
    for (std::size_t i = 0; i < p.w2.size(); ++i) check(&EncoderParams::w2, i);
    for (std::size_t i = 0; i < c.dim; ++i) check(&EncoderParams::b2, i);
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("save/load round trip and corruption") {
  const auto p = random_params(9, small_config());
  std::stringstream ss;
  save_params(p, ss);
  const std::string bytes = ss.str();
  CHECK(bytes.rfind("BFENCODR", 0) == 0);
  std::istringstream in(bytes);
  CHECK(load_params(in) == p);

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_params(truncated), DataError);
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream bad_magic(bad);
  CHECK_THROWS_AS(load_params(bad_magic), DataError);
  std::istringstream empty("");
  CHECK_THROWS_AS(load_params(empty), DataError);

  std::stringstream nan_stream;
  auto q = p;
  q.b2[0] = std::nan("");
  save_params(q, nan_stream);
  CHECK_THROWS_AS(load_params(nan_stream), DataError);
}

TEST_CASE("config validation") {
  EncoderConfig c;
  c.n_min = 5;
  c.n_max = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  EncoderConfig d;
  d.dim = 0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}
