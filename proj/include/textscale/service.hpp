#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "textscale/eval.hpp"
#include "textscale/pipeline.hpp"
#include "textscale/store.hpp"

namespace httplib {
class Server;
}

namespace textscale::service {

struct ServiceConfig {
  std::filesystem::path data_dir = "textscale-data";
  std::size_t workers = 1;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path static_dir;  // optional web client files
};

/// Error surfaced to HTTP clients as {code, message} with a status code.
struct ApiError : std::runtime_error {
  ApiError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

/// Job engine over a Store. Jobs run on `workers` background threads in
/// submission order.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Store& store() { return store_; }

  /// Validates the CSV (entity,year,score) and stores it byte-for-byte.
  std::string upload_training_set(const std::string& csv);

  /// edits: [{"entity","year","score"}] to set or add, or
  /// [{"entity","year","remove":true}] to drop a row.
  std::string clone_training_set(const std::string& id, const nlohmann::json& edits);

  std::string register_corpus(const std::string& matrix_text, const std::vector<std::string>& stoplist,
                              const std::string& name);

  /// Returns the queued job id; execution is asynchronous.
  std::string submit_job(const nlohmann::json& spec, const std::string& corpus_id, const std::string& training_set_id);

  JobRecord get_job(const std::string& id) const { return store_.job(id); }

  /// Result table of a finished job; ApiError 409 if the job is not done.
  eval::ScoreTable job_scores(const std::string& id) const;

  /// Blocks until the job reaches a terminal state or the timeout expires.
  JobRecord wait(const std::string& id, std::chrono::milliseconds timeout = std::chrono::minutes(5));

  /// Registers all routes on the server.
  void mount(httplib::Server& server);

  /// Blocking: mount and listen on config host:port.
  void serve();

 private:
  void worker_loop(std::stop_token stop);
  void execute(const std::string& job_id);
  pipeline::BatchRunner& runner_for(const std::string& corpus_id);

  ServiceConfig config_;
  Store store_;

  std::mutex queue_mutex_;
  std::condition_variable_any queue_cv_;
  std::deque<std::string> queue_;
  std::condition_variable_any done_cv_;

  std::mutex runners_mutex_;
  std::map<std::string, std::unique_ptr<pipeline::BatchRunner>> runners_;

  std::vector<std::jthread> workers_;
};

nlohmann::json table_to_json(const eval::ScoreTable& table);

}  // namespace textscale::service
