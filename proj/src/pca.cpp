#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <Eigen/Dense>

#include "belforge/ann_index.hpp"
#include "belforge/binary_io.hpp"
#include "belforge/error.hpp"

namespace belforge {

PcaTransform fit_pca(const Matrix& data, std::size_t k) {
  const std::size_t n = data.rows;
  const std::size_t d = data.cols;
  if (n < 2) throw ConfigError("PCA needs at least two rows");
  if (k < 1 || k > std::min(n - 1, d)) {
    throw ConfigError("PCA components must lie in [1, " + std::to_string(std::min(n - 1, d)) +
                      "], got " + std::to_string(k));
  }

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> x(data.data.data(), static_cast<Eigen::Index>(n),
                                     static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DataError("covariance eigendecomposition failed");

  PcaTransform t;
  t.mean.assign(mean.data(), mean.data() + d);
  t.projection = Matrix(d, k);
  t.explained_variance.resize(k);
  // Eigen returns eigenvalues in ascending order.
  for (std::size_t c = 0; c < k; ++c) {
    const auto src = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < v.size(); ++r) {
      if (std::abs(v(r)) > std::abs(v(arg))) arg = r;
    }
    if (v(arg) < 0) v = -v;
    for (std::size_t r = 0; r < d; ++r) t.projection(r, c) = v(static_cast<Eigen::Index>(r));
    t.explained_variance[c] = std::max(0.0, solver.eigenvalues()(src));
  }
  return t;
}

std::vector<double> project(const PcaTransform& t, std::span<const double> v) {
  if (v.size() != t.input_dim()) {
    throw ConfigError("PCA input has dimension " + std::to_string(v.size()) + ", expected " +
                      std::to_string(t.input_dim()));
  }
  std::vector<double> z(t.components(), 0.0);
  for (std::size_t r = 0; r < t.input_dim(); ++r) {
    const double centered = v[r] - t.mean[r];
    for (std::size_t c = 0; c < t.components(); ++c) z[c] += t.projection(r, c) * centered;
  }
  return z;
}

std::vector<double> reconstruct(const PcaTransform& t, std::span<const double> z) {
  if (z.size() != t.components()) throw ConfigError("PCA code has the wrong dimension");
  std::vector<double> v = t.mean;
  for (std::size_t r = 0; r < t.input_dim(); ++r) {
    for (std::size_t c = 0; c < t.components(); ++c) v[r] += t.projection(r, c) * z[c];
  }
  return v;
}

std::vector<double> apply_pca(const PcaTransform& t, std::span<const double> v) {
  std::vector<double> z = project(t, v);
  double sq = 0.0;
  for (double x : z) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm >= kMinNorm) {
    for (auto& x : z) x /= norm;
  }
  return z;
}

namespace {

constexpr char kPcaMagic[9] = "BFPCATRF";

}  // namespace

void save_pca(const PcaTransform& t, std::ostream& out) {
  binary::put_magic(out, kPcaMagic);
  binary::put_u32(out, kIndexFormatVersion);
  binary::put_u64(out, t.input_dim());
  binary::put_u64(out, t.components());
  binary::put_f64s(out, t.mean);
  binary::put_f64s(out, t.projection.data);
  binary::put_f64s(out, t.explained_variance);
  if (!out) throw IoError("failed writing PCA transform");
}

PcaTransform load_pca(std::istream& in) {
  binary::expect_magic(in, kPcaMagic, "PCA transform");
  const std::uint32_t version = binary::get_u32(in, "PCA header");
  if (version != kIndexFormatVersion) throw DataError("unsupported PCA format version");
  const std::uint64_t d = binary::get_u64(in, "PCA header");
  const std::uint64_t k = binary::get_u64(in, "PCA header");
  if (d == 0 || k == 0 || k > d || d > (1u << 20)) throw DataError("PCA artifact has invalid dimensions");
  PcaTransform t;
  t.mean = binary::get_f64s(in, d, "PCA mean");
  t.projection = Matrix(d, k);
  t.projection.data = binary::get_f64s(in, d * k, "PCA projection");
  t.explained_variance = binary::get_f64s(in, k, "PCA variances");
  return t;
}

}  // namespace belforge
