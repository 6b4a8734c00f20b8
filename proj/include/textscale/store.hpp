#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace textscale::service {

enum class JobState { queued, running, done, failed };

std::string to_string(JobState s);
JobState parse_job_state(const std::string& s);

struct JobRecord {
  std::string id;
  nlohmann::json spec;  // BatchSpec as JSON
  std::string corpus_id;
  std::string training_set_id;
  JobState state = JobState::queued;
  std::string created;
  std::string finished;
  std::string result_id;  // score table, set when done
  std::string error;      // set when failed
};

/// A stored file: kind-specific id, SHA-256 of its bytes, and its path
/// relative to the data directory.
struct Resource {
  std::string id;
  std::string hash;
  std::string path;
  nlohmann::json meta;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Content-addressed blobs plus one JSON manifest, rewritten atomically
/// (temp file + rename) on every change. All methods are thread-safe.
class Store {
 public:
  explicit Store(std::filesystem::path data_dir);

  const std::filesystem::path& data_dir() const { return dir_; }

  Resource add_corpus(const std::string& matrix_text, const std::vector<std::string>& stoplist, const std::string& name);
  Resource add_training_set(const std::string& csv, const std::string& parent = {});
  Resource add_score_table(const std::string& csv, const std::string& job_id);

  std::vector<Resource> corpora() const;
  std::vector<Resource> training_sets() const;
  Resource corpus(const std::string& id) const;
  Resource training_set(const std::string& id) const;
  Resource score_table(const std::string& id) const;

  /// Bytes of a stored resource; throws NotFound.
  std::string read(const Resource& r) const;

  JobRecord create_job(nlohmann::json spec, std::string corpus_id, std::string training_set_id);
  JobRecord job(const std::string& id) const;
  std::vector<JobRecord> jobs() const;
  /// Enforces queued -> running -> {done, failed}.
  JobRecord transition(const std::string& id, JobState next, const std::string& result_id = {},
                       const std::string& error = {});

  /// Marks jobs left running by a previous process as failed and returns the
  /// ids of jobs still queued, in creation order.
  std::vector<std::string> recover();

  /// Recomputes every blob hash; returns ids whose content no longer matches.
  std::vector<std::string> verify() const;

 private:
  Resource add_blob(const std::string& kind, const std::string& bytes, const std::string& ext, nlohmann::json meta);
  std::optional<Resource> find(const std::string& kind, const std::string& id) const;
  void load();
  void save() const;
  std::string next_id(const std::string& prefix);

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  nlohmann::json manifest_;
};

std::string sha256_hex(const std::string& bytes);
std::string utc_now();

nlohmann::json to_json(const JobRecord& job);
JobRecord job_from_json(const nlohmann::json& j);

}  // namespace textscale::service
