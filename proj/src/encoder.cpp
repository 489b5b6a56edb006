#include "belforge/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "belforge/binary_io.hpp"
#include "belforge/random.hpp"
#include "belforge/text.hpp"

namespace belforge {

void EncoderConfig::validate() const {
  if (n_min < 1 || n_max < n_min) throw ConfigError("encoder n-gram bounds must satisfy 1 <= n_min <= n_max");
  if (buckets < 1 || hidden < 1 || dim < 1) throw ConfigError("encoder dimensions must be >= 1");
  if (buckets > (std::size_t{1} << 32)) throw ConfigError("encoder buckets must fit in 32 bits");
}

SparseFeatures featurize(std::string_view raw, const EncoderConfig& config) {
  const std::string_view trimmed = text::trim(raw);
  if (trimmed.empty()) throw UnencodableError("cannot encode an empty mention");

  std::vector<char32_t> cps;
  cps.reserve(trimmed.size() + 2);
  cps.push_back(U'^');
  for (char32_t cp : text::decode_utf8(trimmed)) cps.push_back(config.lowercase ? text::to_lower(cp) : cp);
  cps.push_back(U'$');

  std::vector<std::uint32_t> hits;
  std::string gram;
  for (int n = config.n_min; n <= config.n_max; ++n) {
    const auto len = static_cast<std::size_t>(n);
    for (std::size_t start = 0; start + len <= cps.size(); ++start) {
      gram.clear();
      for (std::size_t k = 0; k < len; ++k) text::append_utf8(gram, cps[start + k]);
      hits.push_back(static_cast<std::uint32_t>(text::fnv1a64(gram) % config.buckets));
    }
  }
  std::sort(hits.begin(), hits.end());

  SparseFeatures f;
  for (std::uint32_t h : hits) {
    if (!f.index.empty() && f.index.back() == h) {
      f.value.back() += 1.0;
    } else {
      f.index.push_back(h);
      f.value.push_back(1.0);
    }
  }
  return f;
}

EncoderParams EncoderParams::zeros(const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  p.config = config;
  p.w1.assign(config.hidden * config.buckets, 0.0);
  p.b1.assign(config.hidden, 0.0);
  p.w2.assign(config.dim * config.hidden, 0.0);
  p.b2.assign(config.dim, 0.0);
  return p;
}

EncoderParams init_params(std::uint64_t seed, const EncoderConfig& config) {
  EncoderParams p = EncoderParams::zeros(config);
  Rng rng = make_rng(seed, 0xE1C0);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(config.buckets));
  for (auto& w : p.w1) w = uniform(rng, -s1, s1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for (auto& w : p.w2) w = uniform(rng, -s2, s2);
  return p;
}

ForwardPass forward(const EncoderParams& params, std::string_view text) {
  const EncoderConfig& c = params.config;
  ForwardPass pass;
  pass.features = featurize(text, c);

  pass.pre = params.b1;
  for (std::size_t k = 0; k < pass.features.nnz(); ++k) {
    const double x = pass.features.value[k];
    const double* column = &params.w1[pass.features.index[k] * c.hidden];
    for (std::size_t i = 0; i < c.hidden; ++i) pass.pre[i] += column[i] * x;
  }
  pass.hidden.resize(c.hidden);
  for (std::size_t i = 0; i < c.hidden; ++i) pass.hidden[i] = std::max(0.0, pass.pre[i]);

  pass.raw = params.b2;
  for (std::size_t r = 0; r < c.dim; ++r) {
    const double* row = &params.w2[r * c.hidden];
    double acc = 0.0;
    for (std::size_t i = 0; i < c.hidden; ++i) acc += row[i] * pass.hidden[i];
    pass.raw[r] += acc;
  }

  double sq = 0.0;
  for (double v : pass.raw) sq += v * v;
  pass.raw_norm = std::sqrt(sq);
  pass.normalized = c.normalize_output && pass.raw_norm >= kMinNorm;
  pass.output = pass.raw;
  if (pass.normalized) {
    for (auto& v : pass.output) v /= pass.raw_norm;
  }
  return pass;
}

Embedding encode(const EncoderParams& params, std::string_view text) {
  return forward(params, text).output;
}

void accumulate_backward(const EncoderParams& params, const ForwardPass& pass,
                         std::span<const double> upstream, EncoderParams& grads) {
  const EncoderConfig& c = params.config;
  if (upstream.size() != c.dim) throw ConfigError("upstream gradient has the wrong dimension");

  // Through y = e / |e|: dy^T u = (u - y (y.u)) / |e|.
  std::vector<double> g_raw(upstream.begin(), upstream.end());
  if (pass.normalized) {
    double yu = 0.0;
    for (std::size_t r = 0; r < c.dim; ++r) yu += pass.output[r] * upstream[r];
    for (std::size_t r = 0; r < c.dim; ++r) {
      g_raw[r] = (upstream[r] - pass.output[r] * yu) / pass.raw_norm;
    }
  }

  std::vector<double> g_hidden(c.hidden, 0.0);
  for (std::size_t r = 0; r < c.dim; ++r) {
    const double g = g_raw[r];
    grads.b2[r] += g;
    if (g == 0.0) continue;
    double* grad_row = &grads.w2[r * c.hidden];
    const double* row = &params.w2[r * c.hidden];
    for (std::size_t i = 0; i < c.hidden; ++i) {
      grad_row[i] += g * pass.hidden[i];
      g_hidden[i] += row[i] * g;
    }
  }

  for (std::size_t i = 0; i < c.hidden; ++i) {
    if (pass.pre[i] <= 0.0) g_hidden[i] = 0.0;
    grads.b1[i] += g_hidden[i];
  }
  for (std::size_t k = 0; k < pass.features.nnz(); ++k) {
    const double x = pass.features.value[k];
    double* column = &grads.w1[pass.features.index[k] * c.hidden];
    for (std::size_t i = 0; i < c.hidden; ++i) column[i] += g_hidden[i] * x;
  }
}

EncoderParams encode_backward(const EncoderParams& params, std::string_view text,
                              std::span<const double> upstream) {
  EncoderParams grads = EncoderParams::zeros(params.config);
  accumulate_backward(params, forward(params, text), upstream, grads);
  return grads;
}

namespace {

constexpr char kEncoderMagic[9] = "BFENCODR";

}  // namespace

void save_params(const EncoderParams& p, std::ostream& out) {
  binary::put_magic(out, kEncoderMagic);
  binary::put_u32(out, kEncoderFormatVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(p.config.n_min));
  binary::put_u32(out, static_cast<std::uint32_t>(p.config.n_max));
  binary::put_u64(out, p.config.buckets);
  binary::put_u64(out, p.config.hidden);
  binary::put_u64(out, p.config.dim);
  binary::put_u32(out, (p.config.lowercase ? 1u : 0u) | (p.config.normalize_output ? 2u : 0u));
  binary::put_f64s(out, p.w1);
  binary::put_f64s(out, p.b1);
  binary::put_f64s(out, p.w2);
  binary::put_f64s(out, p.b2);
  if (!out) throw IoError("failed writing encoder parameters");
}

EncoderParams load_params(std::istream& in) {
  binary::expect_magic(in, kEncoderMagic, "encoder");
  const std::uint32_t version = binary::get_u32(in, "encoder header");
  if (version != kEncoderFormatVersion) {
    throw DataError("unsupported encoder format version " + std::to_string(version));
  }
  EncoderConfig c;
  c.n_min = static_cast<int>(binary::get_u32(in, "encoder header"));
  c.n_max = static_cast<int>(binary::get_u32(in, "encoder header"));
  c.buckets = binary::get_u64(in, "encoder header");
  c.hidden = binary::get_u64(in, "encoder header");
  c.dim = binary::get_u64(in, "encoder header");
  const std::uint32_t flags = binary::get_u32(in, "encoder header");
  c.lowercase = flags & 1u;
  c.normalize_output = flags & 2u;
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("encoder artifact has invalid dimensions: ") + e.what());
  }
  if (c.hidden * c.buckets > (std::size_t{1} << 34)) {
    throw DataError("encoder artifact dimensions are implausibly large");
  }
  EncoderParams p;
  p.config = c;
  p.w1 = binary::get_f64s(in, c.hidden * c.buckets, "W1");
  p.b1 = binary::get_f64s(in, c.hidden, "b1");
  p.w2 = binary::get_f64s(in, c.dim * c.hidden, "W2");
  p.b2 = binary::get_f64s(in, c.dim, "b2");
  for (const auto* block : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    for (double v : *block) {
      if (!std::isfinite(v)) throw DataError("encoder artifact contains non-finite values");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError("encoder artifact has trailing bytes");
  }
  return p;
}

}  // namespace belforge
