#include "doctest.h"

#include <cmath>
#include <sstream>

#include "belforge/encoder.hpp"
#include "belforge/io.hpp"
#include "belforge/log.hpp"
#include "belforge/trainer.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace belforge;
using belforge::testing::brute_force_mine;
using belforge::testing::rel_error;

namespace {

std::vector<OntologyRecord> terms_for(const std::string& cui, std::size_t k, std::int64_t first_id = 0) {
  std::vector<OntologyRecord> out;
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back({first_id + static_cast<std::int64_t>(i), cui, "term" + std::to_string(i), "V", "DISO"});
  }
  return out;
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.buckets = 512;
  c.hidden = 16;
  c.dim = 8;
  return c;
}

std::vector<PositivePair> synthetic_pairs(std::size_t concepts, std::uint64_t seed) {
  testing::SyntheticOptions o;
  o.concepts = concepts;
  o.heldout = 0;
  o.weak = 0;
  return generate_pretrain_pairs(testing::make_synthetic(seed, o).ontology);
}

}  // namespace

TEST_CASE("pretrain pair counts are C(k,2)") {
  for (std::size_t k : {1u, 2u, 3u, 5u}) {
    CHECK(generate_pretrain_pairs(terms_for("C0000001", k)).size() == k * (k - 1) / 2);
  }
  auto both = terms_for("C0000001", 3);
  const auto more = terms_for("C0000002", 5, 10);
  both.insert(both.end(), more.begin(), more.end());
  CHECK(generate_pretrain_pairs(both).size() == 3 + 10);
}

TEST_CASE("pair file format is bit-exact") {
  const std::vector<OntologyRecord> o = {{0, "C0000001", "griep", "V", "DISO"},
                                         {1, "C0000001", "influenza", "V", "DISO"}};
  const auto pairs = generate_pretrain_pairs(o);
  std::ostringstream out;
  write_pairs(pairs, out);
  CHECK(out.str() == "C0000001||griep||influenza\n");
  std::istringstream in(out.str());
  const auto back = read_pairs(in);
  CHECK(back.records == pairs);
  CHECK(back.malformed == 0);

  std::istringstream bad("C0000001||a\nnot a pair\nC0000002||x||y\n");
  const auto p = read_pairs(bad);
  CHECK(p.records.size() == 1);
  CHECK(p.malformed == 2);
}

TEST_CASE("terms that cannot be serialized are skipped") {
  log::set_quiet(true);
  const std::vector<OntologyRecord> o = {{0, "C0000001", "a||b", "V", "DISO"},
                                         {1, "C0000001", "c", "V", "DISO"},
                                         {2, "C0000001", "d\ne", "V", "DISO"},
                                         {3, "C0000001", "f", "V", "DISO"}};
  const auto pairs = generate_pretrain_pairs(o);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0] == PositivePair{"C0000001", "c", "f"});
  log::set_quiet(false);
}

TEST_CASE("finetune pairs") {
  CorpusSlice star;
  star.sentences = {{0, "P", "MI", 1}};
  star.mentions = {{0, 0, 2, "MI", "hartinfarct", "C0000001", "Q1"}};
  const std::vector<OntologyRecord> o = {{0, "C0000001", "myocard infarct", "V", "DISO"},
                                         {1, "C0000001", "hartinfarct", "V", "DISO"}};
  const auto pairs = generate_finetune_pairs(star, o);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == PositivePair{"C0000001", "MI", "myocard infarct"});

  CorpusSlice self = star;
  self.mentions[0].anchor = "hartinfarct";
  CHECK(generate_finetune_pairs(self, {{1, "C0000001", "hartinfarct", "V", "DISO"}}).empty());

  auto many = terms_for("C0000001", 80);
  std::reverse(many.begin(), many.end());
  const auto capped = generate_finetune_pairs(star, many, 50);
  REQUIRE(capped.size() == 50);
  CHECK(capped.front().term_b == "term0");
  CHECK(capped.back().term_b == "term49");
}

TEST_CASE("miner examples") {
  const MiningConfig cfg{0.2};
  const std::vector<std::string> labels = {"A", "A", "B"};
  CHECK(mine_hard_triplets({{0.0}, {0.0}, {0.0}}, labels, cfg).empty());
  const auto hit = mine_hard_triplets({{0.0}, {1.0}, {0.5}}, labels, cfg);
  REQUIRE(hit.size() >= 1);
  CHECK(hit[0] == Triplet{0, 1, 2});
  const auto miss = mine_hard_triplets({{0.0}, {0.6}, {0.5}}, labels, cfg);
  CHECK(std::find(miss.begin(), miss.end(), Triplet{0, 1, 2}) == miss.end());
}

TEST_CASE("property: miner equals the brute-force oracle") {
  Rng rng = make_rng(21, 4);
  std::size_t mismatches = 0, total = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + uniform_below(rng, 32);
    const std::size_t d = 1 + uniform_below(rng, 6);
    const double margin = std::vector<double>{0.0, 0.2, 1.0}[trial % 3];
    std::vector<std::vector<double>> x(b, std::vector<double>(d));
    std::vector<std::string> labels(b);
    for (std::size_t i = 0; i < b; ++i) {
      for (double& v : x[i]) v = uniform(rng, -1, 1);
      labels[i] = std::string(1, char('A' + uniform_below(rng, 4)));
    }
    const auto got = mine_hard_triplets(x, labels, MiningConfig{margin});
    const auto want = brute_force_mine(x, labels, margin);
    total += want.size();
    if (got.size() != want.size()) {
      ++mismatches;
      continue;
    }
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i].anchor != want[i].a || got[i].positive != want[i].p || got[i].negative != want[i].n) {
        ++mismatches;
        break;
      }
    }
  }
  CHECK(mismatches == 0);
  CHECK(total > 0);
}

TEST_CASE("ms_loss hand value and empty mined set") {
  const std::vector<std::string> labels = {"A", "A", "B"};
  std::vector<double> s(9, 0.0);
  s[0 * 3 + 1] = s[1 * 3 + 0] = 0.9;
  s[0 * 3 + 2] = s[2 * 3 + 0] = 0.8;
  const auto r = ms_loss(s, 3, labels, {{0, 1, 2}}, MsLossConfig{2.0, 50.0, 0.5});
  // 1/2 log(1 + e^-0.8) + 1/50 log(1 + e^15)
  const double hand = 0.5 * std::log(1 + std::exp(-0.8)) + 0.02 * std::log(1 + std::exp(15.0));
  CHECK(r.loss == doctest::Approx(hand).epsilon(1e-12));
  CHECK(std::abs(r.loss - 0.4855) < 1e-3);
  CHECK(std::abs(r.loss - 0.4856) < 1e-3);
  CHECK(r.active_anchors == 1);

  const auto zero = ms_loss(s, 3, labels, {}, MsLossConfig{});
  CHECK(zero.loss == 0.0);
  CHECK(zero.active_anchors == 0);
  for (double g : zero.grad) CHECK(g == 0.0);
}

TEST_CASE("property: ms_loss gradient matches central finite differences") {
  Rng rng = make_rng(31, 4);
  double worst = 0;
  for (int draw = 0; draw < 50; ++draw) {
    const std::size_t b = 4 + uniform_below(rng, 9);
    std::vector<Embedding> x(b, Embedding(3));
    std::vector<std::string> labels(b);
    for (std::size_t i = 0; i < b; ++i) {
      for (double& v : x[i]) v = uniform(rng, -1, 1);
      labels[i] = std::string(1, char('A' + uniform_below(rng, 3)));
    }
    const auto mined = mine_hard_triplets(x, labels, MiningConfig{0.0});
    std::vector<double> s(b * b);
    for (double& v : s) v = uniform(rng, -1, 1);
    const MsLossConfig cfg{2.0, uniform(rng, 5.0, 50.0), 0.5};
    const auto r = ms_loss(s, b, labels, mined, cfg);
    for (std::size_t k = 0; k < b * b; ++k) {
      auto plus = s, minus = s;
      const double h = 1e-6;
      plus[k] += h;
      minus[k] -= h;
      const double fd = (ms_loss(plus, b, labels, mined, cfg).loss - ms_loss(minus, b, labels, mined, cfg).loss) / (2 * h);
      const double e = rel_error(r.grad[k], fd, 1e-4);
      worst = std::max(worst, e);
      CHECK(e < 1e-4);
    }
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("train_epoch: zero learning rate leaves params unchanged") {
  log::set_quiet(true);
  const auto pairs = synthetic_pairs(20, 1);
  EncoderParams p = init_params(5, tiny_encoder());
  const EncoderParams before = p;
  TrainConfig t;
  t.learning_rate = 0;
  t.batch_size = 16;
  train_epoch(pairs, p, t, MiningConfig{}, MsLossConfig{}, 0);
  CHECK(p == before);
  log::set_quiet(false);
}

TEST_CASE("train_epoch: a batch without triplets only decays") {
  log::set_quiet(true);
  const std::vector<PositivePair> pairs = {{"C0000001", "koorts", "verhoging"}};
  EncoderParams p = init_params(5, tiny_encoder());
  const EncoderParams before = p;
  TrainConfig t;
  t.learning_rate = 0.1;
  t.weight_decay = 0.5;
  const auto r = train_epoch(pairs, p, t, MiningConfig{}, MsLossConfig{}, 0);
  CHECK(r.mined_triplets == 0);
  CHECK(r.mean_loss == 0.0);
  for (std::size_t i = 0; i < p.w1.size(); ++i) CHECK(p.w1[i] == doctest::Approx(before.w1[i] * 0.95).epsilon(1e-14));
  for (std::size_t i = 0; i < p.w2.size(); ++i) CHECK(p.w2[i] == doctest::Approx(before.w2[i] * 0.95).epsilon(1e-14));
  log::set_quiet(false);
}

TEST_CASE("training reduces the loss on a synthetic ontology") {
  log::set_quiet(true);
  const auto pairs = synthetic_pairs(50, 2);
  TrainConfig t;
  t.learning_rate = 0.05;
  t.batch_size = 32;
  const auto run = run_training(Stage::kPretrain, pairs, std::nullopt, tiny_encoder(), t, MiningConfig{},
                                MsLossConfig{}, TrainingOptions{3});
  REQUIRE(run.loss_log.size() == 3);
  CHECK(run.loss_log.back() < run.loss_log.front());
  log::set_quiet(false);
}

TEST_CASE("run_training: determinism, zero epochs, resume, finetune guard, checkpoints") {
  log::set_quiet(true);
  const auto pairs = synthetic_pairs(15, 3);
  const auto enc = tiny_encoder();
  TrainConfig t;
  t.learning_rate = 0.05;
  t.batch_size = 16;
  t.seed = 9;

  const auto zero = run_training(Stage::kPretrain, pairs, std::nullopt, enc, t, {}, {}, TrainingOptions{0});
  CHECK(zero.params == init_params(9, enc));
  CHECK(zero.loss_log.empty());

  const auto a = run_training(Stage::kPretrain, pairs, std::nullopt, enc, t, {}, {}, TrainingOptions{2});
  const auto b = run_training(Stage::kPretrain, pairs, std::nullopt, enc, t, {}, {}, TrainingOptions{2});
  CHECK(a.params == b.params);
  CHECK(a.loss_log == b.loss_log);

  const auto dir = testing::scratch_dir("checkpoints");
  TrainingOptions first{1};
  first.checkpoint_dir = dir;
  const auto one = run_training(Stage::kPretrain, pairs, std::nullopt, enc, t, {}, {}, first);
  REQUIRE(std::filesystem::exists(dir / "epoch-001.bin"));
  auto in = io::open_input(dir / "epoch-001.bin");
  const EncoderParams saved = load_params(in);
  CHECK(saved == one.params);

  TrainingOptions rest{1};
  rest.start_epoch = 1;
  const auto resumed = run_training(Stage::kPretrain, pairs, saved, enc, t, {}, {}, rest);
  CHECK(resumed.params == a.params);
  CHECK(resumed.loss_log.back() == a.loss_log.back());

  CHECK_THROWS_AS(run_training(Stage::kFinetune, pairs, std::nullopt, enc, t, {}, {}, TrainingOptions{1}),
                  ConfigError);
  CHECK_THROWS_AS(run_training(Stage::kPretrain, pairs, std::nullopt, enc, t, {}, {}, TrainingOptions{-1}),
                  ConfigError);
  log::set_quiet(false);
}

TEST_CASE("config validation") {
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  MsLossConfig l;
  l.alpha = 0;
  CHECK_THROWS_AS(l.validate(), ConfigError);
  MiningConfig m;
  m.margin = -1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("loss log json") {
  CHECK(loss_log_json({0.5, 0.25}) == "[0.5,0.25]\n");
}
