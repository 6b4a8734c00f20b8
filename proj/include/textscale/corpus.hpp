#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace textscale {

/// Identifies one document: an entity (e.g. a country code) in a given year.
struct DocKey {
  std::string entity;
  int year = 0;

  auto operator<=>(const DocKey&) const = default;
  std::string str() const;
};

struct DocKeyHash {
  std::size_t operator()(const DocKey& k) const noexcept;
};

struct RawDocument {
  DocKey key;
  std::string text;
};

/// Ordered list of unique terms plus their document frequencies.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t i) const { return words_.at(i); }
  const std::vector<std::string>& words() const { return words_; }
  std::optional<std::size_t> index(std::string_view word) const;

  const std::vector<std::size_t>& df() const { return df_; }
  std::size_t df(std::size_t i) const { return df_.at(i); }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  friend class SparseTermMatrix;

  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> df_;
};

/// One stored (word, count) pair of a document column.
struct TermCount {
  std::size_t word = 0;
  std::uint64_t count = 0;

  bool operator==(const TermCount&) const = default;
};

/// Terms x documents count matrix stored column-wise (one sparse column per
/// document, entries sorted by word index, all counts > 0).
class SparseTermMatrix {
 public:
  SparseTermMatrix() = default;

  /// Columns must hold strictly increasing word indices with positive counts.
  SparseTermMatrix(std::vector<std::string> words, std::vector<DocKey> keys,
                   std::vector<std::vector<TermCount>> columns);

  std::size_t n_words() const { return vocab_.size(); }
  std::size_t n_docs() const { return keys_.size(); }
  std::size_t nnz() const;

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<DocKey>& doc_keys() const { return keys_; }
  const DocKey& doc_key(std::size_t j) const { return keys_.at(j); }
  std::optional<std::size_t> doc_index(const DocKey& key) const;

  const std::vector<TermCount>& column(std::size_t j) const { return columns_.at(j); }
  std::uint64_t count(std::size_t word, std::size_t doc) const;
  std::uint64_t doc_length(std::size_t doc) const;

  /// Matrix restricted to the listed documents, vocabulary unchanged.
  SparseTermMatrix select_docs(const std::vector<std::size_t>& docs) const;

  bool operator==(const SparseTermMatrix& other) const;

 private:
  Vocabulary vocab_;
  std::vector<DocKey> keys_;
  std::unordered_map<DocKey, std::size_t, DocKeyHash> key_index_;
  std::vector<std::vector<TermCount>> columns_;
};

enum class CorpusVariant { A, B };

struct CorpusVariantConfig {
  CorpusVariant variant = CorpusVariant::A;
  std::vector<std::string> stoplist;
  std::uint64_t min_max_in_doc_count = 2;
};

/// Maximal runs of letters, keeping apostrophes and hyphens that sit between
/// two letters. Everything else separates tokens. Non-ASCII bytes (UTF-8
/// sequences) are treated as letters.
std::vector<std::string> tokenize(std::string_view text);

/// Drops every word whose occurrences across the whole corpus are all
/// capitalized; lowercases the rest. Takes one token list per document.
std::vector<std::vector<std::string>> strip_proper_nouns(
    const std::vector<std::vector<std::string>>& docs);

/// Tokenizes each document and applies strip_proper_nouns.
std::vector<std::vector<std::string>> strip_proper_nouns(const std::vector<RawDocument>& docs);

/// Throws std::invalid_argument naming the duplicate when a key repeats.
SparseTermMatrix build_term_matrix(const std::vector<std::vector<std::string>>& tokens,
                                   const std::vector<DocKey>& keys);

/// Variant A is the identity. Variant B drops stoplist words and words whose
/// largest per-document count is below config.min_max_in_doc_count.
SparseTermMatrix apply_variant(const SparseTermMatrix& matrix, const CorpusVariantConfig& config);

/// Concatenates texts sharing a key (in input order) and sorts by key.
std::vector<RawDocument> merge_documents(std::vector<RawDocument> docs);

/// Reads `<entity>_<year>.txt` files from a directory.
std::vector<RawDocument> load_text_directory(const std::filesystem::path& dir);

/// Reads JSON lines with `entity`, `year` and `text` fields.
std::vector<RawDocument> load_jsonl(const std::filesystem::path& file);

/// Directory or .jsonl file, merged by key.
std::vector<RawDocument> load_documents(const std::filesystem::path& input);

/// Whitespace-separated words, one or more per line; '#' starts a comment.
std::vector<std::string> load_stoplist(const std::filesystem::path& file);

/// Full ingestion: tokenize, strip proper nouns, count, apply variant.
SparseTermMatrix ingest(const std::vector<RawDocument>& docs, const CorpusVariantConfig& config);

// Text format:
//   m n nnz
//   m lines, one word each
//   n lines, "entity year"
//   nnz lines, "word_index doc_index count" ordered by doc then word
void write_matrix(std::ostream& out, const SparseTermMatrix& matrix);
SparseTermMatrix read_matrix(std::istream& in);
void save_matrix(const std::filesystem::path& file, const SparseTermMatrix& matrix);
SparseTermMatrix load_matrix(const std::filesystem::path& file);

}  // namespace textscale
