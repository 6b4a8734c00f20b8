#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "textscale/corpus.hpp"
#include "textscale/rng.hpp"

using namespace textscale;
using Tokens = std::vector<std::string>;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("textscale-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

SparseTermMatrix small_matrix() {
  return build_term_matrix({{"a", "a", "b"}, {"b", "c"}, {"a", "c", "c", "c"}},
                           {{"AAA", 2000}, {"BBB", 2000}, {"AAA", 2001}});
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("tokenize") {
    CHECK(tokenize("").empty());
    CHECK(tokenize("Vote, vote!") == Tokens{"Vote", "vote"});
    CHECK(tokenize("the 2nd e-mail") == Tokens{"the", "nd", "e-mail"});
    CHECK(tokenize("don't stop--now") == Tokens{"don't", "stop", "now"});
    CHECK(tokenize("-edge- 'quoted'") == Tokens{"edge", "quoted"});
    CHECK(tokenize("a-b-c x--y") == Tokens{"a-b-c", "x", "y"});
    CHECK(tokenize("São Paulo") == Tokens{"São", "Paulo"});
  }

  TEST_CASE("proper nouns") {
    const auto out = strip_proper_nouns(std::vector<Tokens>{{"Washington", "said", "the"}, {"The", "Washington", "post"}});
    for (const auto& doc : out) CHECK(std::find(doc.begin(), doc.end(), "washington") == doc.end());
    CHECK(out[0] == Tokens{"said", "the"});
    CHECK(out[1] == Tokens{"the", "post"});

    const auto turkey = strip_proper_nouns(std::vector<Tokens>{{"Turkey", "votes"}, {"roast", "turkey"}});
    CHECK(turkey[0] == Tokens{"turkey", "votes"});
    CHECK(turkey[1] == Tokens{"roast", "turkey"});
  }

  TEST_CASE("proper noun stripping is idempotent") {
    Rng rng(11);
    const Tokens pool{"Alpha", "alpha", "Beta", "Gamma", "gamma", "delta", "Eps"};
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Tokens> docs(1 + rng.below(4));
      for (auto& d : docs)
        for (std::size_t i = rng.below(12); i > 0; --i) d.push_back(pool[rng.below(pool.size())]);
      const auto once = strip_proper_nouns(docs);
      CHECK(strip_proper_nouns(once) == once);
    }
  }

  TEST_CASE("raw documents are tokenized before stripping") {
    const std::vector<RawDocument> docs{{{"X", 1}, "Paris is big. Paris!"}, {{"Y", 1}, "Big news"}};
    const auto out = strip_proper_nouns(docs);
    CHECK(out[0] == Tokens{"is", "big"});
    CHECK(out[1] == Tokens{"big", "news"});
  }

  TEST_CASE("term matrix counts") {
    const auto m = build_term_matrix({{"a", "a", "b"}}, {{"X", 1}});
    CHECK(m.count(*m.vocab().index("a"), 0) == 2);
    CHECK(m.count(*m.vocab().index("b"), 0) == 1);
    const auto m2 = build_term_matrix({{"a"}, {"a"}}, {{"X", 1}, {"Y", 1}});
    CHECK(m2.vocab().df(*m2.vocab().index("a")) == 2);
    CHECK_THROWS_AS(build_term_matrix({{"a"}, {"b"}}, {{"X", 1}, {"X", 1}}), std::invalid_argument);
  }

  TEST_CASE("term matrix equals a brute-force tally") {
    Rng rng(3);
    const Tokens words{"w", "x", "y", "z", "v"};
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<Tokens> docs(3);
      for (auto& d : docs)
        for (std::size_t i = rng.below(15); i > 0; --i) d.push_back(words[rng.below(5)]);
      const auto m = build_term_matrix(docs, {{"A", 1}, {"B", 1}, {"C", 1}});
      for (std::size_t j = 0; j < 3; ++j) {
        std::map<std::string, std::uint64_t> tally;
        for (const auto& w : docs[j]) ++tally[w];
        for (const auto& w : words) {
          const auto idx = m.vocab().index(w);
          CHECK((idx ? m.count(*idx, j) : 0) == (tally.count(w) ? tally[w] : 0));
        }
        CHECK(m.doc_length(j) == docs[j].size());
      }
    }
  }

  TEST_CASE("variant A is the identity") {
    const auto m = small_matrix();
    CHECK(apply_variant(m, {}) == m);
  }

  TEST_CASE("variant B thresholds and stoplist") {
    const auto m = build_term_matrix({{"once", "twice", "the"}, {"once", "twice", "twice", "the", "the"}, {"once"}},
                                     {{"A", 1}, {"B", 1}, {"C", 1}});
    CorpusVariantConfig cfg{CorpusVariant::B, {"the"}, 2};
    const auto b = apply_variant(m, cfg);
    CHECK(b.vocab().words() == Tokens{"twice"});
    CHECK(b.n_docs() == 3);
    CHECK(b.count(0, 1) == 2);
  }

  TEST_CASE("variant B keeps a subset of words meeting both rules") {
    Rng rng(5);
    const Tokens pool{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<Tokens> docs(2 + rng.below(4));
      std::vector<DocKey> keys;
      for (std::size_t j = 0; j < docs.size(); ++j) {
        keys.push_back({"D" + std::to_string(j), 1});
        for (std::size_t i = 1 + rng.below(10); i > 0; --i) docs[j].push_back(pool[rng.below(pool.size())]);
      }
      const auto m = build_term_matrix(docs, keys);
      CorpusVariantConfig cfg{CorpusVariant::B, {"a", "b"}, 1 + rng.below(3)};
      SparseTermMatrix b;
      try {
        b = apply_variant(m, cfg);
      } catch (const std::invalid_argument&) {
        continue;  // every word filtered out
      }
      for (const auto& w : b.vocab().words()) {
        const auto i = *m.vocab().index(w);
        std::uint64_t max_count = 0;
        for (std::size_t j = 0; j < m.n_docs(); ++j) max_count = std::max(max_count, m.count(i, j));
        CHECK(max_count >= cfg.min_max_in_doc_count);
        CHECK(w != "a");
        CHECK(w != "b");
        for (std::size_t j = 0; j < m.n_docs(); ++j) CHECK(b.count(*b.vocab().index(w), j) == m.count(i, j));
      }
      // Every dropped word fails one of the rules.
      for (const auto& w : m.vocab().words()) {
        if (b.vocab().index(w)) continue;
        const auto i = *m.vocab().index(w);
        std::uint64_t max_count = 0;
        for (std::size_t j = 0; j < m.n_docs(); ++j) max_count = std::max(max_count, m.count(i, j));
        CHECK((w == "a" || w == "b" || max_count < cfg.min_max_in_doc_count));
      }
    }
  }

  TEST_CASE("column sums equal document token counts") {
    const auto m = small_matrix();
    CHECK(m.doc_length(0) == 3);
    CHECK(m.doc_length(1) == 2);
    CHECK(m.doc_length(2) == 4);
    CHECK(m.nnz() == 6);
  }

  TEST_CASE("serialization round trip") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tokens> docs(1 + rng.below(5));
      std::vector<DocKey> keys;
      for (std::size_t j = 0; j < docs.size(); ++j) {
        keys.push_back({"K" + std::to_string(rng.below(1000)) + "x" + std::to_string(j), 1990 + static_cast<int>(j)});
        for (std::size_t i = rng.below(20); i > 0; --i) docs[j].push_back(std::string(1, static_cast<char>('a' + rng.below(10))));
      }
      const auto m = build_term_matrix(docs, keys);
      std::stringstream ss;
      write_matrix(ss, m);
      const auto back = read_matrix(ss);
      CHECK(back == m);
      CHECK(back.vocab().words() == m.vocab().words());
      CHECK(back.doc_keys() == m.doc_keys());
      CHECK(back.vocab().df() == m.vocab().df());
    }
  }

  TEST_CASE("malformed matrix files are rejected") {
    std::stringstream bad("2 1 1\na\nb\nX 1\n5 0 1\n");
    CHECK_THROWS(read_matrix(bad));
    std::stringstream truncated("1 1 1\na\nX 1\n");
    CHECK_THROWS(read_matrix(truncated));
  }

  TEST_CASE("loading from a directory and from JSON lines") {
    const auto dir = temp_dir("load");
    std::ofstream(dir / "USA_1999.txt") << "Votes were cast. Votes matter.";
    std::ofstream(dir / "USA_1999.extra") << "ignored";
    std::ofstream(dir / "CAF_2000.txt") << "the votes";
    const auto docs = load_documents(dir);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].key == DocKey{"CAF", 2000});
    CHECK(docs[1].key == DocKey{"USA", 1999});

    const auto jl = dir / "docs.jsonl";
    std::ofstream(jl) << R"({"entity":"USA","year":1999,"text":"one"})" << "\n"
                      << R"({"entity":"USA","year":1999,"text":"two"})" << "\n"
                      << R"({"entity":"BRA","year":1999,"text":"three"})" << "\n";
    const auto merged = load_documents(jl);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].key.entity == "BRA");
    CHECK(tokenize(merged[1].text) == Tokens{"one", "two"});

    const auto stop = dir / "stop.txt";
    std::ofstream(stop) << "# comment\nthe a\nof  # trailing\n";
    CHECK(load_stoplist(stop) == Tokens{"the", "a", "of"});
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("ingest end to end") {
    const std::vector<RawDocument> docs{{{"A", 1}, "The Senate votes. the senate"}, {{"B", 1}, "Votes votes Ankara"}};
    const auto m = ingest(docs, {});
    CHECK(m.vocab().words() == Tokens{"senate", "the", "votes"});
    CHECK(m.count(*m.vocab().index("votes"), 1) == 2);
  }
}
