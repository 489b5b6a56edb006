#pragma once

// Synthetic ontology/mention generator for the training-effectiveness checks.
//
// Every concept owns a made-up core word. Ontology synonyms are edit-distance
// perturbations of that core, usually wrapped in filler words shared across
// the whole ontology ("chronische ... syndroom"), so raw n-gram overlap is a
// poor guide: many wrong terms share the filler. Mentions (held-out and the
// weak corpus) are perturbed cores wrapped in a different, clinical-note
// style filler that never occurs in the ontology.

#include <algorithm>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "belforge/corpus.hpp"
#include "belforge/ontology.hpp"
#include "belforge/random.hpp"

namespace belforge::testing {

struct SyntheticMention {
  std::string text;
  std::string cui;
};

struct SyntheticData {
  std::vector<OntologyRecord> ontology;
  std::vector<SyntheticMention> heldout;
  std::vector<SyntheticMention> weak;
};

struct SyntheticOptions {
  std::size_t concepts = 200;
  std::size_t min_variants = 3;
  std::size_t max_variants = 5;
  std::size_t heldout = 500;
  std::size_t weak = 200;
  int mention_edits = 2;
  double ontology_filler_rate = 0.8;
  double note_filler_rate = 0.7;
};

inline std::string synthetic_cui(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "C%07zu", 9000000 + i);
  return buf;
}

inline std::string perturb(std::string word, int edits, Rng& rng) {
  static const std::string letters = "abdeghiklmnoprstuvz";
  for (int e = 0; e < edits; ++e) {
    const std::size_t pos = uniform_below(rng, word.size());
    const char c = letters[uniform_below(rng, letters.size())];
    switch (uniform_below(rng, 4)) {
      case 0: word[pos] = c; break;
      case 1: word.insert(word.begin() + static_cast<std::ptrdiff_t>(pos), c); break;
      case 2:
        if (word.size() > 4) word.erase(pos, 1);
        break;
      default:
        if (pos + 1 < word.size()) std::swap(word[pos], word[pos + 1]);
        break;
    }
  }
  return word;
}

inline std::string pick(const std::vector<std::string>& words, Rng& rng) {
  return words[uniform_below(rng, words.size())];
}

inline SyntheticData make_synthetic(std::uint64_t seed, const SyntheticOptions& opt = {}) {
  static const std::vector<std::string> onto_pre = {"chronische", "acute", "primaire", "secundaire",
                                                    "congenitale", "idiopathische"};
  static const std::vector<std::string> onto_post = {"syndroom", "ziekte", "aandoening", "stoornis",
                                                     "afwijking", "infectie"};
  static const std::vector<std::string> note_pre = {"pt met", "bekend met", "verdenking",
                                                    "klachten van", "status na", "last van"};
  static const std::vector<std::string> note_post = {"links", "rechts", "sinds gisteren", "bij inspanning",
                                                     "in de nacht", "opnieuw"};
  static const std::vector<std::string> syllables = {
      "ba", "bo", "da", "de", "fi", "ga", "ka", "ko", "la", "li", "ma", "mu", "na", "no",
      "pa", "pe", "ra", "ri", "sa", "so", "ta", "tu", "va", "ve", "za", "zo", "gel", "mor",
      "pin", "tras", "kel", "dor", "sul", "van", "rem", "lox"};

  Rng rng = make_rng(seed, 0x5E7);
  SyntheticData data;
  std::vector<std::string> cores;
  std::set<std::string> used;
  while (cores.size() < opt.concepts) {
    std::string w;
    const std::size_t n = 3 + uniform_below(rng, 2);
    for (std::size_t s = 0; s < n; ++s) w += pick(syllables, rng);
    if (used.insert(w).second) cores.push_back(w);
  }

  auto ontology_term = [&](const std::string& core, bool plain) {
    std::string t = plain ? core : perturb(core, 1, rng);
    if (uniform01(rng) < opt.ontology_filler_rate) {
      if (uniform01(rng) < 0.5) t = pick(onto_pre, rng) + " " + t;
      if (uniform01(rng) < 0.7) t += " " + pick(onto_post, rng);
    }
    return t;
  };
  std::int64_t id = 0;
  for (std::size_t c = 0; c < cores.size(); ++c) {
    const std::size_t k = opt.min_variants + uniform_below(rng, opt.max_variants - opt.min_variants + 1);
    std::set<std::string> seen;
    for (std::size_t v = 0; seen.size() < k && v < 4 * k; ++v) {
      std::string t = ontology_term(cores[c], v == 0);
      if (!seen.insert(t).second) continue;
      data.ontology.push_back({id++, synthetic_cui(c), t, "SYN", "DISO"});
    }
  }

  auto mention = [&](std::size_t c) {
    std::string t = perturb(cores[c], opt.mention_edits, rng);
    if (uniform01(rng) < opt.note_filler_rate) t = pick(note_pre, rng) + " " + t;
    if (uniform01(rng) < opt.note_filler_rate * 0.7) t += " " + pick(note_post, rng);
    return SyntheticMention{t, synthetic_cui(c)};
  };
  for (std::size_t i = 0; i < opt.heldout; ++i) data.heldout.push_back(mention(uniform_below(rng, cores.size())));
  for (std::size_t i = 0; i < opt.weak; ++i) data.weak.push_back(mention(uniform_below(rng, cores.size())));
  return data;
}

// The weak mentions as a corpus slice (one sentence per mention).
inline CorpusSlice weak_corpus(const std::vector<SyntheticMention>& weak) {
  CorpusSlice slice;
  for (std::size_t i = 0; i < weak.size(); ++i) {
    const auto sid = static_cast<std::int64_t>(i);
    slice.sentences.push_back({sid, "synthetic", weak[i].text, 1});
    slice.mentions.push_back({sid, 0, weak[i].text.size(), weak[i].text, "synthetic", weak[i].cui, "Q1"});
  }
  return slice;
}

}  // namespace belforge::testing
