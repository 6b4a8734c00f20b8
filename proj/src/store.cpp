#include "textscale/store.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace textscale::service {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw NotFound("missing file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& p, const std::string& bytes) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << bytes;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

Resource resource_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), j.at("hash").get<std::string>(), j.at("path").get<std::string>(),
          j.value("meta", nlohmann::json::object())};
}

nlohmann::json resource_to_json(const Resource& r) {
  return {{"id", r.id}, {"hash", r.hash}, {"path", r.path}, {"meta", r.meta}};
}

}  // namespace

std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "?";
}

JobState parse_job_state(const std::string& s) {
  if (s == "queued") return JobState::queued;
  if (s == "running") return JobState::running;
  if (s == "done") return JobState::done;
  if (s == "failed") return JobState::failed;
  throw std::invalid_argument("unknown job state '" + s + "'");
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json to_json(const JobRecord& job) {
  nlohmann::json j{{"id", job.id},
                   {"spec", job.spec},
                   {"corpus_id", job.corpus_id},
                   {"training_set_id", job.training_set_id},
                   {"state", to_string(job.state)},
                   {"created", job.created}};
  if (!job.finished.empty()) j["finished"] = job.finished;
  if (!job.result_id.empty()) j["result_id"] = job.result_id;
  if (!job.error.empty()) j["error"] = job.error;
  return j;
}

JobRecord job_from_json(const nlohmann::json& j) {
  JobRecord r;
  r.id = j.at("id").get<std::string>();
  r.spec = j.at("spec");
  r.corpus_id = j.at("corpus_id").get<std::string>();
  r.training_set_id = j.at("training_set_id").get<std::string>();
  r.state = parse_job_state(j.at("state").get<std::string>());
  r.created = j.value("created", "");
  r.finished = j.value("finished", "");
  r.result_id = j.value("result_id", "");
  r.error = j.value("error", "");
  return r;
}

Store::Store(fs::path data_dir) : dir_(std::move(data_dir)) {
  fs::create_directories(dir_ / "blobs");
  load();
}

void Store::load() {
  const auto path = dir_ / kManifest;
  if (fs::exists(path)) {
    manifest_ = nlohmann::json::parse(read_file(path));
  } else {
    manifest_ = {{"counter", 0},
                 {"corpora", nlohmann::json::array()},
                 {"training_sets", nlohmann::json::array()},
                 {"score_tables", nlohmann::json::array()},
                 {"jobs", nlohmann::json::array()}};
    save();
  }
}

void Store::save() const { write_atomic(dir_ / kManifest, manifest_.dump(2) + "\n"); }

std::string Store::next_id(const std::string& prefix) {
  const auto n = manifest_.at("counter").get<std::uint64_t>() + 1;
  manifest_["counter"] = n;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(n));
  return prefix + "-" + buf;
}

Resource Store::add_blob(const std::string& kind, const std::string& bytes, const std::string& ext, nlohmann::json meta) {
  const auto hash = sha256_hex(bytes);
  const std::string rel = "blobs/" + hash + ext;
  std::lock_guard lock(mutex_);
  if (!fs::exists(dir_ / rel)) write_atomic(dir_ / rel, bytes);
  const std::string prefix = kind == "corpora" ? "corpus" : kind == "training_sets" ? "ts" : "scores";
  Resource r{next_id(prefix), hash, rel, std::move(meta)};
  manifest_[kind].push_back(resource_to_json(r));
  save();
  return r;
}

Resource Store::add_corpus(const std::string& matrix_text, const std::vector<std::string>& stoplist,
                           const std::string& name) {
  nlohmann::json meta{{"name", name}};
  if (!stoplist.empty()) {
    std::string words;
    for (const auto& w : stoplist) words += w + "\n";
    const auto hash = sha256_hex(words);
    const std::string rel = "blobs/" + hash + ".stop";
    {
      std::lock_guard lock(mutex_);
      if (!fs::exists(dir_ / rel)) write_atomic(dir_ / rel, words);
    }
    meta["stoplist_path"] = rel;
    meta["stoplist_hash"] = hash;
  }
  return add_blob("corpora", matrix_text, ".mtx", std::move(meta));
}

Resource Store::add_training_set(const std::string& csv, const std::string& parent) {
  nlohmann::json meta = nlohmann::json::object();
  if (!parent.empty()) meta["parent"] = parent;
  return add_blob("training_sets", csv, ".csv", std::move(meta));
}

Resource Store::add_score_table(const std::string& csv, const std::string& job_id) {
  return add_blob("score_tables", csv, ".csv", {{"job", job_id}});
}

std::optional<Resource> Store::find(const std::string& kind, const std::string& id) const {
  std::lock_guard lock(mutex_);
  for (const auto& j : manifest_.at(kind)) {
    if (j.at("id") == id) return resource_from_json(j);
  }
  return std::nullopt;
}

std::vector<Resource> Store::corpora() const {
  std::lock_guard lock(mutex_);
  std::vector<Resource> out;
  for (const auto& j : manifest_.at("corpora")) out.push_back(resource_from_json(j));
  return out;
}

std::vector<Resource> Store::training_sets() const {
  std::lock_guard lock(mutex_);
  std::vector<Resource> out;
  for (const auto& j : manifest_.at("training_sets")) out.push_back(resource_from_json(j));
  return out;
}

Resource Store::corpus(const std::string& id) const {
  if (auto r = find("corpora", id)) return *r;
  throw NotFound("corpus '" + id + "' not found");
}

Resource Store::training_set(const std::string& id) const {
  if (auto r = find("training_sets", id)) return *r;
  throw NotFound("training set '" + id + "' not found");
}

Resource Store::score_table(const std::string& id) const {
  if (auto r = find("score_tables", id)) return *r;
  throw NotFound("score table '" + id + "' not found");
}

std::string Store::read(const Resource& r) const { return read_file(dir_ / r.path); }

JobRecord Store::create_job(nlohmann::json spec, std::string corpus_id, std::string training_set_id) {
  std::lock_guard lock(mutex_);
  JobRecord job;
  job.id = next_id("job");
  job.spec = std::move(spec);
  job.corpus_id = std::move(corpus_id);
  job.training_set_id = std::move(training_set_id);
  job.created = utc_now();
  manifest_["jobs"].push_back(to_json(job));
  save();
  return job;
}

JobRecord Store::job(const std::string& id) const {
  std::lock_guard lock(mutex_);
  for (const auto& j : manifest_.at("jobs")) {
    if (j.at("id") == id) return job_from_json(j);
  }
  throw NotFound("job '" + id + "' not found");
}

std::vector<JobRecord> Store::jobs() const {
  std::lock_guard lock(mutex_);
  std::vector<JobRecord> out;
  for (const auto& j : manifest_.at("jobs")) out.push_back(job_from_json(j));
  return out;
}

JobRecord Store::transition(const std::string& id, JobState next, const std::string& result_id,
                            const std::string& error) {
  std::lock_guard lock(mutex_);
  for (auto& j : manifest_["jobs"]) {
    if (j.at("id") != id) continue;
    auto job = job_from_json(j);
    const bool allowed = (job.state == JobState::queued && next == JobState::running) ||
                         (job.state == JobState::running && (next == JobState::done || next == JobState::failed));
    if (!allowed)
      throw std::logic_error("job " + id + ": illegal transition " + to_string(job.state) + " -> " + to_string(next));
    if (next == JobState::done && result_id.empty()) throw std::logic_error("job " + id + ": done without a result");
    job.state = next;
    if (next == JobState::done || next == JobState::failed) job.finished = utc_now();
    job.result_id = result_id;
    job.error = error;
    j = to_json(job);
    save();
    return job;
  }
  throw NotFound("job '" + id + "' not found");
}

std::vector<std::string> Store::recover() {
  std::lock_guard lock(mutex_);
  std::vector<std::string> queued;
  bool changed = false;
  for (auto& j : manifest_["jobs"]) {
    auto job = job_from_json(j);
    if (job.state == JobState::running) {
      job.state = JobState::failed;
      job.finished = utc_now();
      job.error = "interrupted by restart";
      j = to_json(job);
      changed = true;
    } else if (job.state == JobState::queued) {
      queued.push_back(job.id);
    }
  }
  if (changed) save();
  return queued;
}

std::vector<std::string> Store::verify() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> bad;
  for (const char* kind : {"corpora", "training_sets", "score_tables"}) {
    for (const auto& j : manifest_.at(kind)) {
      const auto r = resource_from_json(j);
      std::string bytes;
      try {
        bytes = read_file(dir_ / r.path);
      } catch (const NotFound&) {
        bad.push_back(r.id);
        continue;
      }
      if (sha256_hex(bytes) != r.hash) bad.push_back(r.id);
    }
  }
  return bad;
}

}  // namespace textscale::service
