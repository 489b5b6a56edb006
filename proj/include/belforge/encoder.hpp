#pragma once

// Trainable string encoder: hashed character n-gram counts through
// relu(W1 x + b1), then W2 h + b2, optionally L2-normalized.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "belforge/error.hpp"

namespace belforge {

struct EncoderConfig {
  int n_min = 2;
  int n_max = 4;
  std::size_t buckets = 1 << 14;
  std::size_t hidden = 128;
  std::size_t dim = 64;
  bool lowercase = false;
  bool normalize_output = true;

  // Throws ConfigError on non-positive sizes or n_min > n_max.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Raised for mentions with no content after trimming.
class UnencodableError : public DataError {
 public:
  using DataError::DataError;
};

// Sorted, duplicate-free sparse count vector.
struct SparseFeatures {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  std::size_t nnz() const { return index.size(); }
  bool operator==(const SparseFeatures&) const = default;
};

// The text is trimmed (and lower-cased when configured), wrapped in '^' and
// '$', and every code-point n-gram with n_min <= n <= n_max is hashed with
// 64-bit FNV-1a over its UTF-8 bytes, modulo `buckets`.
SparseFeatures featurize(std::string_view text, const EncoderConfig& config);

struct EncoderParams {
  EncoderConfig config;
  std::vector<double> w1;  // hidden x buckets, column-major (one column per feature)
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // dim x hidden, row-major
  std::vector<double> b2;  // dim

  double& W1(std::size_t row, std::size_t feature) { return w1[feature * config.hidden + row]; }
  double W1(std::size_t row, std::size_t feature) const { return w1[feature * config.hidden + row]; }
  double& W2(std::size_t row, std::size_t col) { return w2[row * config.hidden + col]; }
  double W2(std::size_t row, std::size_t col) const { return w2[row * config.hidden + col]; }

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  // Same shapes, all zero. Gradients use this layout too.
  static EncoderParams zeros(const EncoderConfig& config);

  bool operator==(const EncoderParams&) const = default;
};

using Embedding = std::vector<double>;

// Outputs with a pre-normalization norm below this are returned raw.
inline constexpr double kMinNorm = 1e-12;

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for W1 (fan_in = buckets) and
// W2 (fan_in = hidden); biases zero.
EncoderParams init_params(std::uint64_t seed, const EncoderConfig& config);

// Intermediate values kept for the backward pass.
struct ForwardPass {
  SparseFeatures features;
  std::vector<double> pre;     // W1 x + b1
  std::vector<double> hidden;  // relu(pre)
  Embedding raw;               // W2 h + b2
  double raw_norm = 0.0;
  bool normalized = false;
  Embedding output;
};

ForwardPass forward(const EncoderParams& params, std::string_view text);
Embedding encode(const EncoderParams& params, std::string_view text);

// Adds d(upstream . output)/d(theta) into `grads` (shaped like params).
void accumulate_backward(const EncoderParams& params, const ForwardPass& pass,
                         std::span<const double> upstream, EncoderParams& grads);

// Dense gradients of upstream . encode(params, text).
EncoderParams encode_backward(const EncoderParams& params, std::string_view text,
                              std::span<const double> upstream);

// Binary artifact: magic "BFENCODR", format version, dimensions, flags,
// then W1, b1, W2, b2 as little-endian IEEE-754 doubles.
inline constexpr std::uint32_t kEncoderFormatVersion = 1;
void save_params(const EncoderParams& params, std::ostream& out);
// Throws DataError on a bad magic, unknown version, truncated payload,
// inconsistent dimensions or non-finite values.
EncoderParams load_params(std::istream& in);

}  // namespace belforge
