#pragma once

// Inference side: PCA compression of ontology-term embeddings, exact and
// inverted-file nearest-neighbour search by inner product over unit
// vectors, and mention linking on top of both.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "belforge/encoder.hpp"
#include "belforge/ontology.hpp"

namespace belforge {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

struct PcaTransform {
  std::vector<double> mean;                // d
  Matrix projection;                       // d x k, orthonormal columns
  std::vector<double> explained_variance;  // k, non-increasing

  std::size_t input_dim() const { return projection.rows; }
  std::size_t components() const { return projection.cols; }
  bool operator==(const PcaTransform&) const = default;
};

// Eigendecomposition of the sample covariance (n - 1 denominator). Each
// component is signed so that its largest-magnitude entry is positive
// (first such entry on ties). Throws ConfigError unless n >= 2 and
// 1 <= k <= min(n - 1, d).
PcaTransform fit_pca(const Matrix& data, std::size_t k);

// projection^T (v - mean), without normalization.
std::vector<double> project(const PcaTransform& t, std::span<const double> v);
// mean + projection * z.
std::vector<double> reconstruct(const PcaTransform& t, std::span<const double> z);
// project() followed by unit L2 normalization; a (near) zero projection is
// returned as is. Throws ConfigError on a dimension mismatch.
std::vector<double> apply_pca(const PcaTransform& t, std::span<const double> v);

struct Neighbor {
  std::int64_t term_id = 0;
  double score = 0.0;

  bool operator==(const Neighbor&) const = default;
};

struct FlatIndex {
  Matrix vectors;  // n x k, unit rows
  std::vector<std::int64_t> ids;

  std::size_t size() const { return ids.size(); }
  bool operator==(const FlatIndex&) const = default;
};

// Rows are normalized on the way in (zero rows stay zero).
FlatIndex build_flat(const Matrix& vectors, std::vector<std::int64_t> ids);

// Exact top_k by inner product, descending score, ties by ascending id.
// The query is normalized if it is not already unit length.
std::vector<Neighbor> search_flat(const FlatIndex& index, std::span<const double> query,
                                  std::size_t top_k);

struct IvfIndex {
  FlatIndex store;
  Matrix centroids;                                // nlist x k
  std::vector<std::vector<std::uint32_t>> lists;   // rows of `store` per centroid
  std::size_t nprobe = 1;

  std::size_t nlist() const { return centroids.rows; }
  bool operator==(const IvfIndex&) const = default;
};

struct IvfOptions {
  std::size_t nlist = 64;
  std::size_t nprobe = 8;
  std::uint64_t seed = 0;
  int kmeans_iters = 20;
};

// k-means++ seeding (first centre uniform, then D^2 sampling) followed by
// Lloyd iterations; every row lands in the list of its nearest centroid
// (L2, lowest index on ties). An emptied cluster keeps its previous centre.
IvfIndex build_ivf(const Matrix& vectors, std::vector<std::int64_t> ids, const IvfOptions& options);

// Scans the `nprobe` nearest lists exactly; same ordering contract as
// search_flat. nprobe 0 uses the index default; values above nlist are
// clamped with a warning.
std::vector<Neighbor> search_ivf(const IvfIndex& index, std::span<const double> query,
                                 std::size_t top_k, std::size_t nprobe = 0);

using AnnIndex = std::variant<FlatIndex, IvfIndex>;

std::vector<Neighbor> search(const AnnIndex& index, std::span<const double> query,
                             std::size_t top_k);
std::size_t index_size(const AnnIndex& index);

// Versioned binary artifacts (little-endian).
inline constexpr std::uint32_t kIndexFormatVersion = 1;
void save_pca(const PcaTransform& t, std::ostream& out);
PcaTransform load_pca(std::istream& in);
void save_index(const AnnIndex& index, std::ostream& out);
AnnIndex load_index(std::istream& in);

// Raw encoder outputs for every ontology term, one row per record.
Matrix embed_terms(const EncoderParams& params, const std::vector<OntologyRecord>& ontology);

struct LinkModel {
  EncoderParams params;
  PcaTransform transform;
  AnnIndex index;
  std::unordered_map<std::int64_t, std::string> cui_by_term;
};

std::unordered_map<std::int64_t, std::string> cui_lookup(const std::vector<OntologyRecord>& ontology);

struct IndexBuildOptions {
  std::size_t components = 256;
  bool ivf = false;
  IvfOptions ivf_options;
};

// Embeds the ontology, fits PCA on the raw embeddings and indexes the
// compressed, normalized rows keyed by term_id.
LinkModel build_link_model(const EncoderParams& params, const std::vector<OntologyRecord>& ontology,
                           const IndexBuildOptions& options);

class LinkError : public DataError {
 public:
  using DataError::DataError;
};

struct LinkResult {
  std::string predicted_cui;
  std::vector<Neighbor> neighbors;
};

// encode -> apply_pca -> search; the prediction is the top neighbour's cui.
// Throws UnencodableError for an empty mention and LinkError when the index
// has no candidates.
LinkResult link_mention(std::string_view mention, const EncoderParams& params,
                        const PcaTransform& transform, const AnnIndex& index,
                        const std::unordered_map<std::int64_t, std::string>& cui_by_term,
                        std::size_t top_k);

LinkResult link_mention(std::string_view mention, const LinkModel& model, std::size_t top_k);

// {"mention":..,"predicted_cui":..,"score":..,"top_k":[{"term_id":..,"cui":..,"score":..}]}
std::string link_result_json(std::string_view mention, const LinkResult& result,
                             const std::unordered_map<std::int64_t, std::string>& cui_by_term);

}  // namespace belforge
