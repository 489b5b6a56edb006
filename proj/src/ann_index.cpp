#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

#include "json.hpp"

#include "belforge/ann_index.hpp"
#include "belforge/binary_io.hpp"
#include "belforge/error.hpp"
#include "belforge/log.hpp"
#include "belforge/random.hpp"

namespace belforge {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_l2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void normalize_in_place(std::span<double> v) {
  const double norm = std::sqrt(dot(v, v));
  if (norm < kMinNorm) return;
  for (auto& x : v) x /= norm;
}

std::vector<double> unit_query(std::span<const double> query) {
  std::vector<double> q(query.begin(), query.end());
  normalize_in_place(q);
  return q;
}

bool ranks_before(const Neighbor& a, const Neighbor& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.term_id < b.term_id;
}

std::vector<Neighbor> top_neighbors(std::vector<Neighbor> candidates, std::size_t top_k) {
  const std::size_t keep = std::min(top_k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), ranks_before);
  candidates.resize(keep);
  return candidates;
}

std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> v) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d = squared_l2(centroids.row(c), v);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace

FlatIndex build_flat(const Matrix& vectors, std::vector<std::int64_t> ids) {
  if (vectors.rows != ids.size()) throw ConfigError("index rows and ids differ in count");
  FlatIndex index{vectors, std::move(ids)};
  for (std::size_t r = 0; r < index.vectors.rows; ++r) normalize_in_place(index.vectors.row(r));
  return index;
}

std::vector<Neighbor> search_flat(const FlatIndex& index, std::span<const double> query,
                                  std::size_t top_k) {
  if (index.size() == 0 || top_k == 0) return {};
  if (query.size() != index.vectors.cols) throw ConfigError("query dimension does not match the index");
  const std::vector<double> q = unit_query(query);
  std::vector<Neighbor> candidates;
  candidates.reserve(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    candidates.push_back({index.ids[r], dot(index.vectors.row(r), q)});
  }
  return top_neighbors(std::move(candidates), top_k);
}

IvfIndex build_ivf(const Matrix& vectors, std::vector<std::int64_t> ids, const IvfOptions& options) {
  IvfIndex index;
  index.store = build_flat(vectors, std::move(ids));
  const std::size_t n = index.store.size();
  const std::size_t dim = index.store.vectors.cols;
  if (options.nlist < 1 || options.nlist > n) {
    throw ConfigError("nlist must lie in [1, " + std::to_string(n) + "]");
  }
  if (options.nprobe < 1) throw ConfigError("nprobe must be >= 1");
  const std::size_t nlist = options.nlist;
  const Matrix& x = index.store.vectors;

  // k-means++ seeding
  Rng rng = make_rng(options.seed, 0x1F1F);
  Matrix centroids(nlist, dim);
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(uniform_below(rng, n));
  chosen[first] = true;
  std::copy(x.row(first).begin(), x.row(first).end(), centroids.row(0).begin());
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = squared_l2(x.row(i), centroids.row(0));
  for (std::size_t c = 1; c < nlist; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : closest[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double cumulative = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        cumulative += closest[i];
        if (cumulative > target) {
          pick = i;
          break;
        }
      }
    }
    if (pick == n) {
      // all remaining points coincide with a centre, or rounding ran past the end
      for (std::size_t i = n; i-- > 0;) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = true;
    std::copy(x.row(pick).begin(), x.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_l2(x.row(i), centroids.row(c)));
    }
  }

  std::vector<std::size_t> assignment(n, 0);
  for (int iter = 0; iter < options.kmeans_iters; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest_centroid(centroids, x.row(i));
      changed |= c != assignment[i];
      assignment[i] = c;
    }
    if (!changed) break;
    Matrix sums(nlist, dim);
    std::vector<std::size_t> counts(nlist, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assignment[i]];
      auto s = sums.row(assignment[i]);
      const auto v = x.row(i);
      for (std::size_t k = 0; k < dim; ++k) s[k] += v[k];
    }
    for (std::size_t c = 0; c < nlist; ++c) {
      if (counts[c] == 0) continue;
      auto dst = centroids.row(c);
      const auto s = sums.row(c);
      for (std::size_t k = 0; k < dim; ++k) dst[k] = s[k] / static_cast<double>(counts[c]);
    }
  }

  index.centroids = std::move(centroids);
  index.lists.assign(nlist, {});
  for (std::size_t i = 0; i < n; ++i) {
    index.lists[nearest_centroid(index.centroids, x.row(i))].push_back(static_cast<std::uint32_t>(i));
  }
  index.nprobe = std::min(options.nprobe, nlist);
  if (options.nprobe > nlist) log::warn("nprobe exceeds nlist; clamped to " + std::to_string(nlist));
  return index;
}

std::vector<Neighbor> search_ivf(const IvfIndex& index, std::span<const double> query,
                                 std::size_t top_k, std::size_t nprobe) {
  if (index.store.size() == 0 || top_k == 0) return {};
  if (query.size() != index.store.vectors.cols) throw ConfigError("query dimension does not match the index");
  if (nprobe == 0) nprobe = index.nprobe;
  if (nprobe > index.nlist()) {
    log::warn("nprobe " + std::to_string(nprobe) + " exceeds nlist; clamped to " +
              std::to_string(index.nlist()));
    nprobe = index.nlist();
  }
  const std::vector<double> q = unit_query(query);

  std::vector<std::pair<double, std::size_t>> cells;
  cells.reserve(index.nlist());
  for (std::size_t c = 0; c < index.nlist(); ++c) cells.emplace_back(squared_l2(index.centroids.row(c), q), c);
  std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(nprobe), cells.end());

  std::vector<Neighbor> candidates;
  for (std::size_t p = 0; p < nprobe; ++p) {
    for (std::uint32_t row : index.lists[cells[p].second]) {
      candidates.push_back({index.store.ids[row], dot(index.store.vectors.row(row), q)});
    }
  }
  return top_neighbors(std::move(candidates), top_k);
}

std::vector<Neighbor> search(const AnnIndex& index, std::span<const double> query, std::size_t top_k) {
  return std::visit(
      [&](const auto& idx) -> std::vector<Neighbor> {
        if constexpr (std::is_same_v<std::decay_t<decltype(idx)>, FlatIndex>) {
          return search_flat(idx, query, top_k);
        } else {
          return search_ivf(idx, query, top_k);
        }
      },
      index);
}

std::size_t index_size(const AnnIndex& index) {
  return std::visit(
      [](const auto& idx) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(idx)>, FlatIndex>) {
          return idx.size();
        } else {
          return idx.store.size();
        }
      },
      index);
}

namespace {

constexpr char kIndexMagic[9] = "BFANNIDX";

void put_flat(std::ostream& out, const FlatIndex& f) {
  binary::put_u64(out, f.vectors.rows);
  binary::put_u64(out, f.vectors.cols);
  binary::put_f64s(out, f.vectors.data);
  for (std::int64_t id : f.ids) binary::put_i64(out, id);
}

FlatIndex get_flat(std::istream& in) {
  FlatIndex f;
  const std::uint64_t n = binary::get_u64(in, "index header");
  const std::uint64_t k = binary::get_u64(in, "index header");
  if (k == 0 || k > (1u << 20) || n > (1ull << 32)) throw DataError("index artifact has invalid dimensions");
  f.vectors = Matrix(n, k);
  f.vectors.data = binary::get_f64s(in, n * k, "index vectors");
  f.ids.resize(n);
  for (auto& id : f.ids) id = binary::get_i64(in, "index ids");
  return f;
}

}  // namespace

void save_index(const AnnIndex& index, std::ostream& out) {
  binary::put_magic(out, kIndexMagic);
  binary::put_u32(out, kIndexFormatVersion);
  if (const auto* flat = std::get_if<FlatIndex>(&index)) {
    binary::put_u32(out, 0);
    put_flat(out, *flat);
  } else {
    const auto& ivf = std::get<IvfIndex>(index);
    binary::put_u32(out, 1);
    put_flat(out, ivf.store);
    binary::put_u64(out, ivf.nlist());
    binary::put_u64(out, ivf.nprobe);
    binary::put_f64s(out, ivf.centroids.data);
    for (const auto& list : ivf.lists) {
      binary::put_u64(out, list.size());
      for (std::uint32_t row : list) binary::put_u32(out, row);
    }
  }
  if (!out) throw IoError("failed writing index");
}

AnnIndex load_index(std::istream& in) {
  binary::expect_magic(in, kIndexMagic, "index");
  if (binary::get_u32(in, "index header") != kIndexFormatVersion) {
    throw DataError("unsupported index format version");
  }
  const std::uint32_t kind = binary::get_u32(in, "index header");
  if (kind == 0) return get_flat(in);
  if (kind != 1) throw DataError("unknown index kind");
  IvfIndex ivf;
  ivf.store = get_flat(in);
  const std::uint64_t nlist = binary::get_u64(in, "ivf header");
  ivf.nprobe = binary::get_u64(in, "ivf header");
  if (nlist == 0 || nlist > std::max<std::size_t>(1, ivf.store.size()) || ivf.nprobe == 0 ||
      ivf.nprobe > nlist) {
    throw DataError("ivf artifact has invalid list parameters");
  }
  ivf.centroids = Matrix(nlist, ivf.store.vectors.cols);
  ivf.centroids.data = binary::get_f64s(in, nlist * ivf.store.vectors.cols, "ivf centroids");
  ivf.lists.resize(nlist);
  std::size_t total = 0;
  for (auto& list : ivf.lists) {
    const std::uint64_t len = binary::get_u64(in, "ivf list");
    if (len > ivf.store.size()) throw DataError("ivf list longer than the index");
    list.resize(len);
    for (auto& row : list) {
      row = binary::get_u32(in, "ivf list");
      if (row >= ivf.store.size()) throw DataError("ivf list refers to a missing row");
    }
    total += len;
  }
  if (total != ivf.store.size()) throw DataError("ivf lists do not cover the index exactly");
  return ivf;
}

Matrix embed_terms(const EncoderParams& params, const std::vector<OntologyRecord>& ontology) {
  Matrix m(ontology.size(), params.config.dim);
  for (std::size_t r = 0; r < ontology.size(); ++r) {
    const Embedding e = encode(params, ontology[r].text);
    std::copy(e.begin(), e.end(), m.row(r).begin());
  }
  return m;
}

std::unordered_map<std::int64_t, std::string> cui_lookup(const std::vector<OntologyRecord>& ontology) {
  std::unordered_map<std::int64_t, std::string> lookup;
  lookup.reserve(ontology.size());
  for (const auto& r : ontology) lookup.emplace(r.term_id, r.cui);
  return lookup;
}

LinkModel build_link_model(const EncoderParams& params, const std::vector<OntologyRecord>& ontology,
                           const IndexBuildOptions& options) {
  LinkModel model;
  model.params = params;
  const Matrix raw = embed_terms(params, ontology);
  model.transform = fit_pca(raw, options.components);

  Matrix compressed(raw.rows, options.components);
  for (std::size_t r = 0; r < raw.rows; ++r) {
    const auto z = apply_pca(model.transform, raw.row(r));
    std::copy(z.begin(), z.end(), compressed.row(r).begin());
  }
  std::vector<std::int64_t> ids;
  ids.reserve(ontology.size());
  for (const auto& rec : ontology) ids.push_back(rec.term_id);
  if (options.ivf) {
    model.index = build_ivf(compressed, std::move(ids), options.ivf_options);
  } else {
    model.index = build_flat(compressed, std::move(ids));
  }
  model.cui_by_term = cui_lookup(ontology);
  return model;
}

LinkResult link_mention(std::string_view mention, const EncoderParams& params,
                        const PcaTransform& transform, const AnnIndex& index,
                        const std::unordered_map<std::int64_t, std::string>& cui_by_term,
                        std::size_t top_k) {
  if (index_size(index) == 0) throw LinkError("no candidates: the index is empty");
  const Embedding e = encode(params, mention);
  const std::vector<double> z = apply_pca(transform, e);
  LinkResult result;
  result.neighbors = search(index, z, std::max<std::size_t>(1, top_k));
  if (result.neighbors.empty()) throw LinkError("no candidates found for '" + std::string(mention) + "'");
  const auto it = cui_by_term.find(result.neighbors.front().term_id);
  if (it == cui_by_term.end()) {
    throw LinkError("term " + std::to_string(result.neighbors.front().term_id) + " has no cui");
  }
  result.predicted_cui = it->second;
  return result;
}

LinkResult link_mention(std::string_view mention, const LinkModel& model, std::size_t top_k) {
  return link_mention(mention, model.params, model.transform, model.index, model.cui_by_term, top_k);
}

std::string link_result_json(std::string_view mention, const LinkResult& result,
                             const std::unordered_map<std::int64_t, std::string>& cui_by_term) {
  nlohmann::ordered_json j;
  j["mention"] = std::string(mention);
  j["predicted_cui"] = result.predicted_cui;
  j["score"] = result.neighbors.empty() ? 0.0 : result.neighbors.front().score;
  nlohmann::ordered_json top = nlohmann::ordered_json::array();
  for (const auto& nb : result.neighbors) {
    nlohmann::ordered_json e;
    e["term_id"] = nb.term_id;
    const auto it = cui_by_term.find(nb.term_id);
    e["cui"] = it == cui_by_term.end() ? std::string() : it->second;
    e["score"] = nb.score;
    top.push_back(std::move(e));
  }
  j["top_k"] = std::move(top);
  return j.dump();
}

}  // namespace belforge
