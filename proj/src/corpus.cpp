#include "textscale/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace textscale {

namespace {

bool is_letter(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

bool is_capitalized(std::string_view token) {
  return !token.empty() && token.front() >= 'A' && token.front() <= 'Z';
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

void check_entity(const DocKey& key) {
  if (key.entity.empty()) throw std::invalid_argument("document key with empty entity");
  for (char c : key.entity) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ',')
      throw std::invalid_argument("entity contains whitespace or comma: '" + key.entity + "'");
  }
}

}  // namespace

std::string DocKey::str() const { return entity + "_" + std::to_string(year); }

std::size_t DocKeyHash::operator()(const DocKey& k) const noexcept {
  return std::hash<std::string>{}(k.entity) * 31u + std::hash<int>{}(k.year);
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second)
      throw std::invalid_argument("duplicate vocabulary word '" + words_[i] + "'");
  }
  df_.assign(words_.size(), 0);
}

std::optional<std::size_t> Vocabulary::index(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

SparseTermMatrix::SparseTermMatrix(std::vector<std::string> words, std::vector<DocKey> keys,
                                   std::vector<std::vector<TermCount>> columns)
    : vocab_(std::move(words)), keys_(std::move(keys)), columns_(std::move(columns)) {
  if (columns_.size() != keys_.size())
    throw std::invalid_argument("column count does not match document key count");
  key_index_.reserve(keys_.size());
  for (std::size_t j = 0; j < keys_.size(); ++j) {
    check_entity(keys_[j]);
    if (!key_index_.emplace(keys_[j], j).second)
      throw std::invalid_argument("duplicate document key " + keys_[j].str());
  }
  for (const auto& col : columns_) {
    std::size_t prev = 0;
    bool first = true;
    for (const auto& e : col) {
      if (e.word >= vocab_.size()) throw std::invalid_argument("word index out of range");
      if (e.count == 0) throw std::invalid_argument("stored count must be positive");
      if (!first && e.word <= prev) throw std::invalid_argument("column entries not strictly increasing");
      prev = e.word;
      first = false;
      ++vocab_.df_[e.word];
    }
  }
}

std::size_t SparseTermMatrix::nnz() const {
  std::size_t total = 0;
  for (const auto& col : columns_) total += col.size();
  return total;
}

std::optional<std::size_t> SparseTermMatrix::doc_index(const DocKey& key) const {
  auto it = key_index_.find(key);
  if (it == key_index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t SparseTermMatrix::count(std::size_t word, std::size_t doc) const {
  const auto& col = columns_.at(doc);
  auto it = std::lower_bound(col.begin(), col.end(), word,
                             [](const TermCount& e, std::size_t w) { return e.word < w; });
  return (it != col.end() && it->word == word) ? it->count : 0;
}

std::uint64_t SparseTermMatrix::doc_length(std::size_t doc) const {
  std::uint64_t total = 0;
  for (const auto& e : columns_.at(doc)) total += e.count;
  return total;
}

SparseTermMatrix SparseTermMatrix::select_docs(const std::vector<std::size_t>& docs) const {
  std::vector<DocKey> keys;
  std::vector<std::vector<TermCount>> cols;
  keys.reserve(docs.size());
  cols.reserve(docs.size());
  for (std::size_t j : docs) {
    keys.push_back(keys_.at(j));
    cols.push_back(columns_.at(j));
  }
  return SparseTermMatrix(vocab_.words(), std::move(keys), std::move(cols));
}

bool SparseTermMatrix::operator==(const SparseTermMatrix& other) const {
  return vocab_ == other.vocab_ && keys_ == other.keys_ && columns_ == other.columns_;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_letter(c)) {
      current.push_back(static_cast<char>(c));
      continue;
    }
    const bool joiner = (c == '\'' || c == '-') && !current.empty() && i + 1 < text.size() &&
                        is_letter(static_cast<unsigned char>(text[i + 1]));
    if (joiner) {
      current.push_back(static_cast<char>(c));
      continue;
    }
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::vector<std::string>> strip_proper_nouns(
    const std::vector<std::vector<std::string>>& docs) {
  // A word survives if at least one of its occurrences is not capitalized.
  std::unordered_set<std::string> keep;
  for (const auto& doc : docs) {
    for (const auto& tok : doc) {
      if (!is_capitalized(tok)) keep.insert(to_lower(tok));
    }
  }
  std::vector<std::vector<std::string>> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    auto& dst = out.emplace_back();
    dst.reserve(doc.size());
    for (const auto& tok : doc) {
      auto lower = to_lower(tok);
      if (keep.contains(lower)) dst.push_back(std::move(lower));
    }
  }
  return out;
}

std::vector<std::vector<std::string>> strip_proper_nouns(const std::vector<RawDocument>& docs) {
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(docs.size());
  for (const auto& d : docs) tokens.push_back(tokenize(d.text));
  return strip_proper_nouns(tokens);
}

SparseTermMatrix build_term_matrix(const std::vector<std::vector<std::string>>& tokens,
                                   const std::vector<DocKey>& keys) {
  if (tokens.size() != keys.size())
    throw std::invalid_argument("one token list per document key is required");
  {
    std::unordered_set<DocKey, DocKeyHash> seen;
    for (const auto& k : keys) {
      if (!seen.insert(k).second) throw std::invalid_argument("duplicate document key " + k.str());
    }
  }

  // Vocabulary in sorted order so the matrix does not depend on document order.
  std::vector<std::string> words;
  {
    std::unordered_set<std::string> unique;
    for (const auto& doc : tokens) unique.insert(doc.begin(), doc.end());
    words.assign(unique.begin(), unique.end());
    std::sort(words.begin(), words.end());
  }
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) index.emplace(words[i], i);

  std::vector<std::vector<TermCount>> columns(tokens.size());
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    std::map<std::size_t, std::uint64_t> counts;
    for (const auto& tok : tokens[j]) ++counts[index.at(tok)];
    auto& col = columns[j];
    col.reserve(counts.size());
    for (const auto& [w, c] : counts) col.push_back({w, c});
  }
  return SparseTermMatrix(std::move(words), keys, std::move(columns));
}

SparseTermMatrix apply_variant(const SparseTermMatrix& matrix, const CorpusVariantConfig& config) {
  if (config.variant == CorpusVariant::A) return matrix;
  if (config.stoplist.empty()) throw std::invalid_argument("corpus variant B requires a non-empty stoplist");

  std::unordered_set<std::string> stop;
  for (const auto& w : config.stoplist) stop.insert(to_lower(w));

  const std::size_t m = matrix.n_words();
  std::vector<std::uint64_t> max_count(m, 0);
  for (std::size_t j = 0; j < matrix.n_docs(); ++j) {
    for (const auto& e : matrix.column(j)) max_count[e.word] = std::max(max_count[e.word], e.count);
  }

  std::vector<std::size_t> remap(m, m);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& w = matrix.vocab().word(i);
    if (stop.contains(w) || max_count[i] < config.min_max_in_doc_count) continue;
    remap[i] = words.size();
    words.push_back(w);
  }
  if (words.empty()) throw std::invalid_argument("corpus variant B leaves an empty vocabulary");

  std::vector<std::vector<TermCount>> columns(matrix.n_docs());
  for (std::size_t j = 0; j < matrix.n_docs(); ++j) {
    for (const auto& e : matrix.column(j)) {
      if (remap[e.word] != m) columns[j].push_back({remap[e.word], e.count});
    }
  }
  return SparseTermMatrix(std::move(words), matrix.doc_keys(), std::move(columns));
}

std::vector<RawDocument> merge_documents(std::vector<RawDocument> docs) {
  std::map<DocKey, std::string> merged;
  for (auto& d : docs) {
    auto& text = merged[d.key];
    if (!text.empty()) text.push_back('\n');
    text += d.text;
  }
  std::vector<RawDocument> out;
  out.reserve(merged.size());
  for (auto& [key, text] : merged) out.push_back({key, std::move(text)});
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<RawDocument> load_text_directory(const std::filesystem::path& dir) {
  std::vector<RawDocument> docs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    const auto stem = entry.path().stem().string();
    const auto sep = stem.rfind('_');
    if (sep == std::string::npos || sep == 0 || sep + 1 == stem.size())
      throw std::runtime_error("file name is not <entity>_<year>.txt: " + entry.path().string());
    DocKey key;
    key.entity = stem.substr(0, sep);
    try {
      std::size_t used = 0;
      key.year = std::stoi(stem.substr(sep + 1), &used);
      if (used != stem.size() - sep - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw std::runtime_error("bad year in file name: " + entry.path().string());
    }
    docs.push_back({std::move(key), read_file(entry.path())});
  }
  return docs;
}

std::vector<RawDocument> load_jsonl(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<RawDocument> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      docs.push_back({DocKey{j.at("entity").get<std::string>(), j.at("year").get<int>()},
                      j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return docs;
}

std::vector<RawDocument> load_documents(const std::filesystem::path& input) {
  if (std::filesystem::is_directory(input)) return merge_documents(load_text_directory(input));
  return merge_documents(load_jsonl(input));
}

std::vector<std::string> load_stoplist(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string w;
    while (ss >> w) words.push_back(to_lower(w));
  }
  return words;
}

SparseTermMatrix ingest(const std::vector<RawDocument>& docs, const CorpusVariantConfig& config) {
  std::vector<DocKey> keys;
  keys.reserve(docs.size());
  for (const auto& d : docs) keys.push_back(d.key);
  return apply_variant(build_term_matrix(strip_proper_nouns(docs), keys), config);
}

void write_matrix(std::ostream& out, const SparseTermMatrix& matrix) {
  out << matrix.n_words() << ' ' << matrix.n_docs() << ' ' << matrix.nnz() << '\n';
  for (const auto& w : matrix.vocab().words()) out << w << '\n';
  for (const auto& k : matrix.doc_keys()) out << k.entity << ' ' << k.year << '\n';
  for (std::size_t j = 0; j < matrix.n_docs(); ++j) {
    for (const auto& e : matrix.column(j)) out << e.word << ' ' << j << ' ' << e.count << '\n';
  }
}

SparseTermMatrix read_matrix(std::istream& in) {
  std::size_t m = 0, n = 0, nnz = 0;
  if (!(in >> m >> n >> nnz)) throw std::runtime_error("matrix: bad header");
  std::vector<std::string> words(m);
  for (auto& w : words) {
    if (!(in >> w)) throw std::runtime_error("matrix: truncated vocabulary");
  }
  std::vector<DocKey> keys(n);
  for (auto& k : keys) {
    if (!(in >> k.entity >> k.year)) throw std::runtime_error("matrix: truncated document keys");
  }
  std::vector<std::vector<TermCount>> columns(n);
  for (std::size_t e = 0; e < nnz; ++e) {
    std::size_t w = 0, d = 0;
    std::uint64_t c = 0;
    if (!(in >> w >> d >> c)) throw std::runtime_error("matrix: truncated entries");
    if (d >= n) throw std::runtime_error("matrix: document index out of range");
    columns[d].push_back({w, c});
  }
  for (auto& col : columns) {
    std::sort(col.begin(), col.end(), [](const TermCount& a, const TermCount& b) { return a.word < b.word; });
  }
  return SparseTermMatrix(std::move(words), std::move(keys), std::move(columns));
}

void save_matrix(const std::filesystem::path& file, const SparseTermMatrix& matrix) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  write_matrix(out, matrix);
}

SparseTermMatrix load_matrix(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return read_matrix(in);
}

}  // namespace textscale
