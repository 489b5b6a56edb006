#include "belforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "json.hpp"

#include "belforge/error.hpp"
#include "belforge/io.hpp"
#include "belforge/log.hpp"
#include "belforge/text.hpp"

namespace belforge {

void MiningConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("mining margin must be >= 0");
}

void MsLossConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("MS loss alpha and beta must be > 0");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
}

namespace {

bool writable_term(const std::string& term) {
  return term.find("||") == std::string::npos && term.find('\n') == std::string::npos &&
         term.find('\r') == std::string::npos && !text::trim(term).empty();
}

}  // namespace

std::vector<PositivePair> generate_pretrain_pairs(const std::vector<OntologyRecord>& ontology) {
  std::vector<const OntologyRecord*> sorted;
  sorted.reserve(ontology.size());
  for (const auto& r : ontology) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->term_id < b->term_id; });

  // cuis in order of their first term
  std::vector<std::string> cui_order;
  std::unordered_map<std::string, std::vector<std::string>> terms;
  std::size_t skipped = 0;
  for (const auto* r : sorted) {
    if (!writable_term(r->text)) {
      ++skipped;
      continue;
    }
    auto [it, inserted] = terms.try_emplace(r->cui);
    if (inserted) cui_order.push_back(r->cui);
    if (std::find(it->second.begin(), it->second.end(), r->text) == it->second.end()) {
      it->second.push_back(r->text);
    }
  }
  if (skipped) log::warn(std::to_string(skipped) + " terms cannot be written to a pair file and were skipped");

  std::vector<PositivePair> pairs;
  for (const auto& cui : cui_order) {
    const auto& t = terms[cui];
    for (std::size_t i = 0; i < t.size(); ++i) {
      for (std::size_t j = i + 1; j < t.size(); ++j) pairs.push_back({cui, t[i], t[j]});
    }
  }
  return pairs;
}

std::vector<PositivePair> generate_finetune_pairs(const CorpusSlice& star,
                                                  const std::vector<OntologyRecord>& ontology,
                                                  std::size_t per_mention_cap) {
  std::unordered_map<std::string, std::vector<const OntologyRecord*>> by_cui;
  for (const auto& r : ontology) by_cui[r.cui].push_back(&r);
  for (auto& [cui, records] : by_cui) {
    std::stable_sort(records.begin(), records.end(),
                     [](const auto* a, const auto* b) { return a->term_id < b->term_id; });
  }

  std::vector<PositivePair> pairs;
  std::size_t skipped = 0;
  for (const auto& m : star.mentions) {
    if (!writable_term(m.anchor)) {
      ++skipped;
      continue;
    }
    const auto it = by_cui.find(m.cui);
    if (it == by_cui.end()) continue;
    std::size_t taken = 0;
    for (const auto* r : it->second) {
      if (taken == per_mention_cap) break;
      if (r->text == m.anchor || !writable_term(r->text)) continue;
      pairs.push_back({m.cui, m.anchor, r->text});
      ++taken;
    }
  }
  if (skipped) log::warn(std::to_string(skipped) + " mentions cannot be written to a pair file and were skipped");
  return pairs;
}

void write_pairs(const std::vector<PositivePair>& pairs, std::ostream& out) {
  for (const auto& p : pairs) out << p.cui << "||" << p.term_a << "||" << p.term_b << '\n';
}

Parsed<PositivePair> read_pairs(std::istream& in) {
  Parsed<PositivePair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = text::split(line, std::string_view("||"));
    if (f.size() != 3 || !text::is_cui(f[0]) || text::trim(f[1]).empty() ||
        text::trim(f[2]).empty() || f[1] == f[2]) {
      ++out.malformed;
      continue;
    }
    out.records.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2])});
  }
  if (in.bad()) throw IoError("read error on pair file");
  return out;
}

namespace {

std::vector<double> distance_matrix(const std::vector<Embedding>& e) {
  const std::size_t n = e.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < e[i].size(); ++k) {
        const double diff = e[i][k] - e[j][k];
        sq += diff * diff;
      }
      d[i * n + j] = d[j * n + i] = std::sqrt(sq);
    }
  }
  return d;
}

}  // namespace

std::vector<Triplet> mine_hard_triplets(const std::vector<Embedding>& embeddings,
                                        const std::vector<std::string>& labels,
                                        const MiningConfig& config, Rng* rng) {
  config.validate();
  const std::size_t n = embeddings.size();
  if (labels.size() != n) throw ConfigError("labels and embeddings differ in length");
  std::vector<Triplet> out;
  if (n < 2) return out;
  const std::vector<double> d = distance_matrix(embeddings);

  std::vector<std::size_t> anchors;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p != a && labels[p] == labels[a]) {
        anchors.push_back(a);
        break;
      }
    }
  }
  if (config.sample_anchors && !anchors.empty()) {
    if (!rng) throw ConfigError("anchor sampling needs a random generator");
    anchors = {anchors[uniform_below(*rng, anchors.size())]};
  }

  for (std::size_t a : anchors) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double d_ap = d[a * n + p];
      for (std::size_t neg = 0; neg < n; ++neg) {
        if (labels[neg] == labels[a]) continue;
        if (d_ap >= d[a * n + neg] + config.margin) out.push_back({a, p, neg});
      }
    }
  }
  return out;
}

namespace {

// log(1 + sum exp(x_k)) and the weights exp(x_k) / (1 + sum exp(x_j)).
double log1p_sum_exp(const std::vector<double>& x, std::vector<double>& weights) {
  double m = 0.0;
  for (double v : x) m = std::max(m, v);
  double total = std::exp(-m);
  weights.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    weights[k] = std::exp(x[k] - m);
    total += weights[k];
  }
  for (auto& w : weights) w /= total;
  return m + std::log(total);
}

}  // namespace

MsLossResult ms_loss(std::span<const double> s, std::size_t batch,
                     const std::vector<std::string>& labels, const std::vector<Triplet>& mined,
                     const MsLossConfig& config) {
  config.validate();
  if (s.size() != batch * batch) throw ConfigError("similarity matrix has the wrong size");
  if (labels.size() != batch) throw ConfigError("labels and similarity matrix differ in size");

  MsLossResult result;
  result.grad.assign(batch * batch, 0.0);

  std::map<std::size_t, std::pair<std::set<std::size_t>, std::set<std::size_t>>> pairs;
  for (const auto& t : mined) {
    if (t.anchor >= batch || t.positive >= batch || t.negative >= batch) {
      throw ConfigError("triplet index outside the batch");
    }
    auto& [pos, neg] = pairs[t.anchor];
    pos.insert(t.positive);
    neg.insert(t.negative);
  }
  if (pairs.empty()) return result;

  const double scale = 1.0 / static_cast<double>(pairs.size());
  std::vector<double> x;
  std::vector<double> w;
  for (const auto& [i, sets] : pairs) {
    const auto& [pos, neg] = sets;
    if (!pos.empty()) {
      x.clear();
      for (std::size_t p : pos) x.push_back(-config.alpha * (s[i * batch + p] - config.base));
      result.loss += scale * log1p_sum_exp(x, w) / config.alpha;
      std::size_t k = 0;
      for (std::size_t p : pos) result.grad[i * batch + p] += -scale * w[k++];
    }
    if (!neg.empty()) {
      x.clear();
      for (std::size_t q : neg) x.push_back(config.beta * (s[i * batch + q] - config.base));
      result.loss += scale * log1p_sum_exp(x, w) / config.beta;
      std::size_t k = 0;
      for (std::size_t q : neg) result.grad[i * batch + q] += scale * w[k++];
    }
  }
  result.active_anchors = pairs.size();
  return result;
}

EpochResult train_epoch(const std::vector<PositivePair>& pairs, EncoderParams& params,
                        const TrainConfig& train, const MiningConfig& mining,
                        const MsLossConfig& loss_cfg, std::uint64_t epoch_index) {
  train.validate();
  mining.validate();
  loss_cfg.validate();
  if (pairs.empty()) throw ConfigError("training needs at least one positive pair");

  Rng rng = make_rng(train.seed, epoch_index);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);

  const std::size_t dim = params.config.dim;
  EncoderParams grads = EncoderParams::zeros(params.config);
  EpochResult result;
  double loss_sum = 0.0;

  for (std::size_t begin = 0; begin < order.size(); begin += train.batch_size) {
    const std::size_t end = std::min(order.size(), begin + train.batch_size);
    const std::size_t items = 2 * (end - begin);

    std::vector<ForwardPass> passes;
    std::vector<std::string> labels;
    std::vector<Embedding> outputs;
    passes.reserve(items);
    labels.reserve(items);
    outputs.reserve(items);
    for (std::size_t k = begin; k < end; ++k) {
      const PositivePair& pair = pairs[order[k]];
      for (const std::string* term : {&pair.term_a, &pair.term_b}) {
        passes.push_back(forward(params, *term));
        labels.push_back(pair.cui);
        outputs.push_back(passes.back().output);
      }
    }

    // Cosine similarities use unit vectors even when the encoder does not
    // normalize its own output.
    std::vector<Embedding> unit(items);
    std::vector<double> norms(items);
    for (std::size_t i = 0; i < items; ++i) {
      double sq = 0.0;
      for (double v : outputs[i]) sq += v * v;
      norms[i] = std::sqrt(sq);
      unit[i] = outputs[i];
      if (norms[i] >= kMinNorm) {
        for (auto& v : unit[i]) v /= norms[i];
      } else {
        std::fill(unit[i].begin(), unit[i].end(), 0.0);
      }
    }
    std::vector<double> sim(items * items);
    for (std::size_t i = 0; i < items; ++i) {
      for (std::size_t j = i; j < items; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += unit[i][k] * unit[j][k];
        sim[i * items + j] = sim[j * items + i] = dot;
      }
    }

    const std::vector<Triplet> triplets = mine_hard_triplets(outputs, labels, mining, &rng);
    const MsLossResult loss = ms_loss(sim, items, labels, triplets, loss_cfg);
    loss_sum += loss.loss;
    result.mined_triplets += triplets.size();
    ++result.batches;

    if (loss.active_anchors > 0) {
      std::fill(grads.w1.begin(), grads.w1.end(), 0.0);
      std::fill(grads.b1.begin(), grads.b1.end(), 0.0);
      std::fill(grads.w2.begin(), grads.w2.end(), 0.0);
      std::fill(grads.b2.begin(), grads.b2.end(), 0.0);
      std::vector<double> upstream(dim);
      for (std::size_t i = 0; i < items; ++i) {
        std::fill(upstream.begin(), upstream.end(), 0.0);
        bool any = false;
        for (std::size_t j = 0; j < items; ++j) {
          const double g = loss.grad[i * items + j] + loss.grad[j * items + i];
          if (g == 0.0) continue;
          any = true;
          for (std::size_t k = 0; k < dim; ++k) upstream[k] += g * unit[j][k];
        }
        if (!any || norms[i] < kMinNorm) continue;
        if (!passes[i].normalized) {
          double uu = 0.0;
          for (std::size_t k = 0; k < dim; ++k) uu += unit[i][k] * upstream[k];
          for (std::size_t k = 0; k < dim; ++k) upstream[k] = (upstream[k] - unit[i][k] * uu) / norms[i];
        }
        accumulate_backward(params, passes[i], upstream, grads);
      }
    }

    const double lr = train.learning_rate;
    const double decay = train.weight_decay;
    auto update = [&](std::vector<double>& w, const std::vector<double>& g, bool has_grad) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] -= lr * ((has_grad ? g[k] : 0.0) + decay * w[k]);
      }
    };
    const bool has_grad = loss.active_anchors > 0;
    update(params.w1, grads.w1, has_grad);
    update(params.b1, grads.b1, has_grad);
    update(params.w2, grads.w2, has_grad);
    update(params.b2, grads.b2, has_grad);
  }

  result.mean_loss = loss_sum / static_cast<double>(result.batches);
  if (result.mined_triplets == 0) log::warn("no hard triplets were mined in this epoch");
  return result;
}

TrainingRun run_training(Stage stage, const std::vector<PositivePair>& pairs,
                         const std::optional<EncoderParams>& initial,
                         const EncoderConfig& encoder, const TrainConfig& train,
                         const MiningConfig& mining, const MsLossConfig& loss,
                         const TrainingOptions& options) {
  if (options.epochs < 0 || options.start_epoch < 0) throw ConfigError("epochs must be >= 0");
  TrainingRun run;
  if (initial) {
    run.params = *initial;
  } else if (stage == Stage::kFinetune) {
    throw ConfigError("fine-tuning needs pretrained encoder parameters");
  } else {
    run.params = init_params(train.seed, encoder);
  }
  if (options.epochs == 0) return run;

  for (int e = 0; e < options.epochs; ++e) {
    const int epoch = options.start_epoch + e;
    const EpochResult r = train_epoch(pairs, run.params, train, mining, loss,
                                      static_cast<std::uint64_t>(epoch));
    run.loss_log.push_back(r.mean_loss);
    log::info((stage == Stage::kPretrain ? "pretrain" : "finetune") + std::string(" epoch ") +
              std::to_string(epoch + 1) + ": mean loss " + std::to_string(r.mean_loss) + ", " +
              std::to_string(r.mined_triplets) + " triplets");
    if (options.checkpoint_dir) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch-%03d.bin", epoch + 1);
      io::write_atomic(*options.checkpoint_dir / name,
                       [&](std::ostream& out) { save_params(run.params, out); });
    }
  }
  return run;
}

std::string loss_log_json(const std::vector<double>& loss_log) {
  return nlohmann::json(loss_log).dump() + "\n";
}

}  // namespace belforge
