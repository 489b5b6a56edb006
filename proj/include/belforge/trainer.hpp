#pragma once

// Self-alignment training: synonym pairs from the ontology (or weakly
// labeled mentions), online hard-triplet mining inside each mini-batch, and
// the Multi-Similarity loss over cosine similarities.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "belforge/corpus.hpp"
#include "belforge/encoder.hpp"
#include "belforge/ontology.hpp"
#include "belforge/random.hpp"

namespace belforge {

struct PositivePair {
  std::string cui;
  std::string term_a;
  std::string term_b;

  bool operator==(const PositivePair&) const = default;
};

struct MiningConfig {
  double margin = 0.2;
  // Mine from a single randomly drawn anchor per batch instead of every
  // item that has a positive.
  bool sample_anchors = false;

  void validate() const;
};

struct MsLossConfig {
  double alpha = 2.0;
  double beta = 50.0;
  double base = 0.5;

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t batch_size = 512;  // pairs per batch
  std::uint64_t seed = 0;

  void validate() const;
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  auto operator<=>(const Triplet&) const = default;
};

// Every unordered pair of distinct terms per cui, terms taken in term_id
// order. Terms containing "||" or a line break cannot be written to a pair
// file and are skipped with a warning.
std::vector<PositivePair> generate_pretrain_pairs(const std::vector<OntologyRecord>& ontology);

// Each mention paired with the ontology terms of its gold cui in term_id
// order, skipping terms equal to the mention, at most `per_mention_cap` each.
std::vector<PositivePair> generate_finetune_pairs(const CorpusSlice& star,
                                                  const std::vector<OntologyRecord>& ontology,
                                                  std::size_t per_mention_cap = 50);

// `CUI||term 1||term 2` per line.
void write_pairs(const std::vector<PositivePair>& pairs, std::ostream& out);
Parsed<PositivePair> read_pairs(std::istream& in);

// Triplets (a, p, n) with label[a] == label[p], a != p, label[n] != label[a]
// and |f(a) - f(p)| >= |f(a) - f(n)| + margin, in lexicographic order.
// `rng` is required when sample_anchors is set.
std::vector<Triplet> mine_hard_triplets(const std::vector<Embedding>& embeddings,
                                        const std::vector<std::string>& labels,
                                        const MiningConfig& config, Rng* rng = nullptr);

struct MsLossResult {
  double loss = 0.0;
  std::vector<double> grad;  // dL/dS, row-major batch x batch
  std::size_t active_anchors = 0;
};

// Multi-Similarity loss restricted to the pairs appearing in `mined`:
// for anchor i with mined positives P and negatives N,
//   L_i = 1/alpha log(1 + sum_P exp(-alpha (S_ip - base)))
//       + 1/beta  log(1 + sum_N exp( beta (S_in - base)))
// averaged over anchors with at least one mined pair. Row i of the
// gradient holds derivatives with respect to S[i][*].
MsLossResult ms_loss(std::span<const double> similarities, std::size_t batch,
                     const std::vector<std::string>& labels, const std::vector<Triplet>& mined,
                     const MsLossConfig& config);

struct EpochResult {
  double mean_loss = 0.0;
  std::size_t batches = 0;
  std::size_t mined_triplets = 0;
};

// One pass over the pairs, shuffled by (seed, epoch_index). Each batch is
// encoded, mined, scored, back-propagated and followed by the update
// w <- w - lr (g + weight_decay w) on every parameter.
EpochResult train_epoch(const std::vector<PositivePair>& pairs, EncoderParams& params,
                        const TrainConfig& train, const MiningConfig& mining,
                        const MsLossConfig& loss, std::uint64_t epoch_index);

enum class Stage { kPretrain, kFinetune };

struct TrainingRun {
  EncoderParams params;
  std::vector<double> loss_log;  // one mean per epoch run
};

struct TrainingOptions {
  int epochs = 1;
  // Epochs already completed by `initial`; the shuffle of epoch e depends
  // only on (seed, e), so a resumed run replays the straight-through one.
  int start_epoch = 0;
  // Writes epoch-NNN.bin after every epoch when set.
  std::optional<std::filesystem::path> checkpoint_dir;
};

// With zero epochs the initial parameters are returned untouched. Pretraining
// without initial parameters starts from init_params(seed, encoder); a
// finetune stage without initial parameters is a ConfigError.
TrainingRun run_training(Stage stage, const std::vector<PositivePair>& pairs,
                         const std::optional<EncoderParams>& initial,
                         const EncoderConfig& encoder, const TrainConfig& train,
                         const MiningConfig& mining, const MsLossConfig& loss,
                         const TrainingOptions& options);

std::string loss_log_json(const std::vector<double>& loss_log);

}  // namespace belforge
