#pragma once

// Synthetic corpus with a known latent score per document. Each token is a
// pole word with probability `signal`; the right pole is chosen with
// probability (1 + z) / 2 for latent z in [-1, 1]. Otherwise, with
// probability `theme_share`, it comes from one of `themes` nuisance themes
// drawn from the document's sparse Dirichlet theme mixture, unrelated to z.
// Remaining tokens are uniform neutral filler.

#include <string>
#include <vector>

#include "textscale/corpus.hpp"
#include "textscale/eval.hpp"
#include "textscale/rng.hpp"

namespace oracle {

struct PlantedConfig {
  std::size_t entities = 40;
  std::vector<int> years{2000, 2001};
  std::size_t pole_words = 12;
  std::size_t neutral_words = 40;
  std::size_t themes = 20;
  std::size_t theme_words = 25;
  double theme_concentration = 0.1;
  std::size_t min_tokens = 300;
  std::size_t max_tokens = 900;
  double signal = 0.35;
  double theme_share = 0.4;
  std::uint64_t seed = 7;
};

struct PlantedCorpus {
  std::vector<textscale::RawDocument> docs;
  textscale::eval::ScoreTable latent;
};

// Letters-only word so the tokenizer keeps it whole.
inline std::string planted_word(char pole, std::size_t i) {
  std::string w{'q', pole};
  do {
    w += static_cast<char>('a' + i % 26);
    i /= 26;
  } while (i > 0);
  return w;
}

inline std::string entity_name(std::size_t i) {
  std::string s = "E";
  s += static_cast<char>('A' + i / 26 % 26);
  s += static_cast<char>('A' + i % 26);
  return s;
}

inline PlantedCorpus make_planted_corpus(const PlantedConfig& cfg) {
  textscale::Rng rng(cfg.seed);
  PlantedCorpus out;
  for (std::size_t e = 0; e < cfg.entities; ++e) {
    for (int year : cfg.years) {
      const double z = rng.uniform(-1.0, 1.0);
      const std::size_t length = cfg.min_tokens + rng.below(cfg.max_tokens - cfg.min_tokens + 1);
      std::vector<double> mix(cfg.themes);
      double total = 0;
      for (auto& m : mix) total += m = rng.gamma(cfg.theme_concentration, 1.0);
      std::string text;
      for (std::size_t t = 0; t < length; ++t) {
        std::string w;
        const double u = rng.uniform();
        if (u < cfg.signal) {
          const char pole = rng.uniform() < (1.0 + z) / 2.0 ? 'r' : 'l';
          w = planted_word(pole, rng.below(cfg.pole_words));
        } else if (u < cfg.signal + cfg.theme_share && total > 0) {
          double pick = rng.uniform() * total;
          std::size_t theme = 0;
          while (theme + 1 < cfg.themes && pick >= mix[theme]) pick -= mix[theme++];
          w = planted_word('t', theme * cfg.theme_words + rng.below(cfg.theme_words));
        } else {
          w = planted_word('n', rng.below(cfg.neutral_words));
        }
        text += w;
        text += ' ';
      }
      out.docs.push_back({{entity_name(e), year}, std::move(text)});
      out.latent.add({{entity_name(e), year}, z, {}, {}, {}});
    }
  }
  return out;
}

}  // namespace oracle
