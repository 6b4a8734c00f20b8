#include "textscale/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace textscale::eval {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("csv line " + std::to_string(lineno) + ": not a number: '" + s + "'");
  }
}

struct Paired {
  std::vector<DocKey> keys;
  std::vector<double> a;
  std::vector<double> b;
};

Paired pair_up(const ScoreTable& a, const ScoreTable& b) {
  Paired p;
  for (const auto& row : a.rows()) {
    if (const auto* other = b.find(row.key)) {
      p.keys.push_back(row.key);
      p.a.push_back(row.score);
      p.b.push_back(other->score);
    }
  }
  return p;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t q = i; q <= j; ++q) r[order[q]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

ScoreTable::ScoreTable(std::vector<ScoreRow> rows) {
  for (auto& r : rows) add(std::move(r));
}

void ScoreTable::add(ScoreRow row) {
  if (!std::isfinite(row.score)) throw std::invalid_argument("score table: non-finite score for " + row.key.str());
  auto it = std::lower_bound(rows_.begin(), rows_.end(), row.key,
                             [](const ScoreRow& r, const DocKey& k) { return r.key < k; });
  if (it != rows_.end() && it->key == row.key) throw std::invalid_argument("score table: duplicate key " + row.key.str());
  rows_.insert(it, std::move(row));
}

const ScoreRow* ScoreTable::find(const DocKey& key) const {
  auto it = std::lower_bound(rows_.begin(), rows_.end(), key, [](const ScoreRow& r, const DocKey& k) { return r.key < k; });
  return (it != rows_.end() && it->key == key) ? &*it : nullptr;
}

ScoreTable from_virgin_scores(const std::vector<wordscores::VirginScore>& scores) {
  ScoreTable t;
  for (const auto& s : scores) {
    ScoreRow row;
    row.key = s.key;
    if (s.is_rescaled) {
      row.score = s.rescaled;
      row.ci_low = s.ci_low;
      row.ci_high = s.ci_high;
    } else {
      row.score = s.raw;
    }
    row.std_error = s.std_error;
    t.add(std::move(row));
  }
  return t;
}

void write_table_csv(std::ostream& out, const ScoreTable& table) {
  const bool with_errors = std::any_of(table.rows().begin(), table.rows().end(),
                                       [](const ScoreRow& r) { return r.std_error || r.ci_low; });
  out << "entity,year,score" << (with_errors ? ",std_error,ci_low,ci_high" : "") << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& r : table.rows()) {
    out << r.key.entity << ',' << r.key.year << ',' << fmt(r.score);
    if (with_errors) out << ',' << opt(r.std_error) << ',' << opt(r.ci_low) << ',' << opt(r.ci_high);
    out << '\n';
  }
}

ScoreTable read_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: missing header");
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto entity = column("entity");
  const auto year = column("year");
  auto score = column("score");
  if (!score) score = column("rescaled");
  if (!entity || !year || !score) throw std::invalid_argument("csv: header needs entity,year,score");
  const auto se = column("std_error");
  const auto lo = column("ci_low");
  const auto hi = column("ci_high");

  ScoreTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::invalid_argument("csv line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                                  " fields");
    ScoreRow row;
    row.key.entity = cells[*entity];
    if (row.key.entity.empty()) throw std::invalid_argument("csv line " + std::to_string(lineno) + ": empty entity");
    try {
      std::size_t used = 0;
      row.key.year = std::stoi(cells[*year], &used);
      if (used != cells[*year].size()) throw std::invalid_argument("year");
    } catch (const std::exception&) {
      throw std::invalid_argument("csv line " + std::to_string(lineno) + ": bad year '" + cells[*year] + "'");
    }
    row.score = parse_double(cells[*score], lineno);
    if (!std::isfinite(row.score)) throw std::invalid_argument("csv line " + std::to_string(lineno) + ": non-finite score");
    auto opt = [&](const std::optional<std::size_t>& c) -> std::optional<double> {
      if (!c || cells[*c].empty()) return std::nullopt;
      return parse_double(cells[*c], lineno);
    };
    row.std_error = opt(se);
    row.ci_low = opt(lo);
    row.ci_high = opt(hi);
    table.add(std::move(row));
  }
  return table;
}

ScoreTable load_table_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return read_table_csv(in);
}

void save_table_csv(const std::filesystem::path& file, const ScoreTable& table) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  write_table_csv(out, table);
}

void write_wordscores_csv(std::ostream& out, const std::vector<wordscores::VirginScore>& scores) {
  out << "entity,year,raw,rescaled,std_error,ci_low,ci_high,n_tokens\n";
  for (const auto& s : scores) {
    out << s.key.entity << ',' << s.key.year << ',' << fmt(s.raw) << ',' << fmt(s.rescaled) << ',' << fmt(s.std_error)
        << ',' << fmt(s.ci_low) << ',' << fmt(s.ci_high) << ',' << s.n_tokens << '\n';
  }
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("pearson: fewer than 2 shared keys");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("pearson: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pearson(const ScoreTable& a, const ScoreTable& b) {
  const auto p = pair_up(a, b);
  return pearson(p.a, p.b);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) { return pearson(ranks(a), ranks(b)); }

double spearman(const ScoreTable& a, const ScoreTable& b) {
  const auto p = pair_up(a, b);
  return spearman(p.a, p.b);
}

std::vector<YearSummary> summary_by_year(const ScoreTable& table) {
  if (table.empty()) throw std::invalid_argument("summary_by_year: empty table");
  std::map<int, std::vector<double>> by_year;
  std::vector<double> all;
  for (const auto& r : table.rows()) {
    by_year[r.key.year].push_back(r.score);
    all.push_back(r.score);
  }
  auto summarize = [](std::optional<int> year, const std::vector<double>& v) {
    YearSummary s;
    s.year = year;
    s.n = v.size();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.std_dev = wordscores::population_sd(v);
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    return s;
  };
  std::vector<YearSummary> out;
  for (const auto& [year, v] : by_year) out.push_back(summarize(year, v));
  out.push_back(summarize(std::nullopt, all));
  return out;
}

DiscrepancyReport discrepancies(const ScoreTable& a, const ScoreTable& b, std::size_t top) {
  const auto p = pair_up(a, b);
  std::vector<Discrepancy> all;
  for (std::size_t i = 0; i < p.keys.size(); ++i) all.push_back({p.keys[i], p.a[i], p.b[i], p.a[i] - p.b[i]});
  const std::size_t count = std::min(top, all.size());

  DiscrepancyReport r;
  r.largest_positive = all;
  std::stable_sort(r.largest_positive.begin(), r.largest_positive.end(),
                   [](const Discrepancy& x, const Discrepancy& y) { return x.delta > y.delta; });
  r.largest_positive.resize(count);
  r.largest_negative = all;
  std::stable_sort(r.largest_negative.begin(), r.largest_negative.end(),
                   [](const Discrepancy& x, const Discrepancy& y) { return x.delta < y.delta; });
  r.largest_negative.resize(count);
  return r;
}

OverlapStats ci_overlap_stats(const ScoreTable& table) {
  std::vector<std::pair<double, double>> iv;
  for (const auto& r : table.rows()) {
    if (!r.ci_low || !r.ci_high) throw std::invalid_argument("ci_overlap_stats: missing interval for " + r.key.str());
    if (*r.ci_low > *r.ci_high) throw std::invalid_argument("ci_overlap_stats: ci_low > ci_high for " + r.key.str());
    iv.emplace_back(*r.ci_low, *r.ci_high);
  }
  const std::size_t n = iv.size();
  // Sweep: for interval i, count j with low_j <= high_i and high_j >= low_i.
  // #overlapping = n - #(high_j < low_i) - #(low_j > high_i); subtract self.
  std::vector<double> lows(n), highs(n);
  for (std::size_t i = 0; i < n; ++i) {
    lows[i] = iv[i].first;
    highs[i] = iv[i].second;
  }
  std::sort(lows.begin(), lows.end());
  std::sort(highs.begin(), highs.end());

  OverlapStats out;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ends_before = static_cast<std::size_t>(std::lower_bound(highs.begin(), highs.end(), iv[i].first) - highs.begin());
    const auto starts_after = static_cast<std::size_t>(lows.end() - std::upper_bound(lows.begin(), lows.end(), iv[i].second));
    const std::size_t c = n - ends_before - starts_after - 1;
    out.counts.emplace_back(table.rows()[i].key, c);
    total += static_cast<double>(c);
  }
  out.mean = n == 0 ? 0.0 : total / static_cast<double>(n);
  return out;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

MeansTest diff_of_means(const GroupStats& g1, const GroupStats& g2) {
  if (g1.std_error < 0.0 || g2.std_error < 0.0) throw std::invalid_argument("diff_of_means: negative standard error");
  const double denom = std::sqrt(g1.std_error * g1.std_error + g2.std_error * g2.std_error);
  if (!(denom > 0.0)) throw std::invalid_argument("diff_of_means: zero standard errors");
  MeansTest t;
  t.z = (g1.mean - g2.mean) / denom;
  t.p_one_sided = normal_upper_tail(std::abs(t.z));
  t.p = std::min(1.0, 2.0 * t.p_one_sided);
  return t;
}

std::vector<RangeSize> range_vs_size(const ScoreTable& table, const std::map<DocKey, double>& sizes) {
  std::vector<RangeSize> out;
  for (const auto& r : table.rows()) {
    auto it = sizes.find(r.key);
    if (it == sizes.end()) throw std::invalid_argument("range_vs_size: no size for " + r.key.str());
    if (!r.ci_low || !r.ci_high) throw std::invalid_argument("range_vs_size: missing interval for " + r.key.str());
    out.push_back({r.key, it->second, *r.ci_high - *r.ci_low});
  }
  return out;
}

}  // namespace textscale::eval
