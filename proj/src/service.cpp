#include "textscale/service.hpp"

#include <sstream>
#include <stdexcept>

#include "httplib.h"
#include "textscale/corpus.hpp"

namespace textscale::service {

namespace {

using nlohmann::json;

eval::ScoreTable parse_table(const std::string& csv) {
  std::istringstream in(csv);
  try {
    return eval::read_table_csv(in);
  } catch (const std::invalid_argument& e) {
    throw ApiError(400, "bad_request", std::string("malformed training CSV: ") + e.what());
  }
}

std::string table_csv(const eval::ScoreTable& t) {
  std::ostringstream out;
  eval::write_table_csv(out, t);
  return out.str();
}

json resource_json(const Resource& r) {
  json j{{"id", r.id}, {"hash", r.hash}};
  for (auto it = r.meta.begin(); it != r.meta.end(); ++it) {
    if (it.key().find("path") == std::string::npos) j[it.key()] = it.value();
  }
  return j;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ApiError& e) {
      send_error(res, e.status, e.code, e.what());
    } catch (const NotFound& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::invalid_argument& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ApiError(400, "bad_request", std::string("invalid JSON body: ") + e.what());
  }
}

std::string required_param(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) throw ApiError(400, "bad_request", "missing query parameter '" + name + "'");
  return req.get_param_value(name);
}

json key_json(const DocKey& k) { return {{"entity", k.entity}, {"year", k.year}}; }

}  // namespace

json table_to_json(const eval::ScoreTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows()) {
    json row = key_json(r.key);
    row["score"] = r.score;
    if (r.std_error) row["std_error"] = *r.std_error;
    if (r.ci_low) row["ci_low"] = *r.ci_low;
    if (r.ci_high) row["ci_high"] = *r.ci_high;
    rows.push_back(std::move(row));
  }
  return rows;
}

Service::Service(ServiceConfig config) : config_(std::move(config)), store_(config_.data_dir) {
  for (const auto& id : store_.recover()) queue_.push_back(id);
  const std::size_t n = std::max<std::size_t>(1, config_.workers);
  for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
}

Service::~Service() {
  for (auto& w : workers_) w.request_stop();
  queue_cv_.notify_all();
  workers_.clear();
}

std::string Service::upload_training_set(const std::string& csv) {
  const auto table = parse_table(csv);
  if (table.empty()) throw ApiError(400, "bad_request", "training set has no rows");
  return store_.add_training_set(csv).id;
}

std::string Service::clone_training_set(const std::string& id, const json& edits) {
  const auto source = store_.training_set(id);
  const auto table = parse_table(store_.read(source));
  std::map<DocKey, eval::ScoreRow> rows;
  for (const auto& r : table.rows()) rows.emplace(r.key, r);

  const json& list = edits.is_object() ? edits.at("edits") : edits;
  if (!list.is_array()) throw ApiError(400, "bad_request", "edits must be an array");
  for (const auto& e : list) {
    DocKey key{e.at("entity").get<std::string>(), e.at("year").get<int>()};
    if (key.entity.empty()) throw ApiError(400, "bad_request", "edit with empty entity");
    if (e.value("remove", false)) {
      if (rows.erase(key) == 0) throw ApiError(400, "bad_request", "cannot remove missing key " + key.str());
      continue;
    }
    if (!e.contains("score") || !e.at("score").is_number())
      throw ApiError(400, "bad_request", "edit for " + key.str() + " needs a numeric score");
    const double score = e.at("score").get<double>();
    if (!std::isfinite(score)) throw ApiError(400, "bad_request", "score for " + key.str() + " is not finite");
    rows[key] = eval::ScoreRow{key, score, std::nullopt, std::nullopt, std::nullopt};
  }
  eval::ScoreTable edited;
  for (auto& [k, r] : rows) edited.add(r);
  return store_.add_training_set(table_csv(edited), id).id;
}

std::string Service::register_corpus(const std::string& matrix_text, const std::vector<std::string>& stoplist,
                                     const std::string& name) {
  std::istringstream in(matrix_text);
  SparseTermMatrix matrix;
  try {
    matrix = read_matrix(in);
  } catch (const std::exception& e) {
    throw ApiError(400, "bad_request", std::string("malformed matrix: ") + e.what());
  }
  auto r = store_.add_corpus(matrix_text, stoplist, name);
  return r.id;
}

std::string Service::submit_job(const json& spec, const std::string& corpus_id, const std::string& training_set_id) {
  store_.corpus(corpus_id);
  store_.training_set(training_set_id);
  const auto parsed = pipeline::batch_spec_from_json(spec);
  const auto job = store_.create_job(pipeline::to_json(parsed), corpus_id, training_set_id);
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(job.id);
  }
  queue_cv_.notify_one();
  return job.id;
}

eval::ScoreTable Service::job_scores(const std::string& id) const {
  const auto job = store_.job(id);
  if (job.state != JobState::done)
    throw ApiError(409, "not_ready", "job " + id + " is " + to_string(job.state) +
                                         (job.error.empty() ? "" : ": " + job.error));
  std::istringstream in(store_.read(store_.score_table(job.result_id)));
  return eval::read_table_csv(in);
}

JobRecord Service::wait(const std::string& id, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::unique_lock lock(queue_mutex_);
  while (true) {
    auto job = store_.job(id);
    if (job.state == JobState::done || job.state == JobState::failed) return job;
    if (done_cv_.wait_until(lock, deadline) == std::cv_status::timeout) return store_.job(id);
  }
}

void Service::worker_loop(std::stop_token stop) {
  while (true) {
    std::string id;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, stop, [this] { return !queue_.empty(); });
      if (stop.stop_requested()) return;
      id = std::move(queue_.front());
      queue_.pop_front();
    }
    execute(id);
    // Pairs with wait(): the state check there happens under queue_mutex_.
    { std::lock_guard lock(queue_mutex_); }
    done_cv_.notify_all();
  }
}

pipeline::BatchRunner& Service::runner_for(const std::string& corpus_id) {
  std::lock_guard lock(runners_mutex_);
  auto& slot = runners_[corpus_id];
  if (!slot) {
    const auto res = store_.corpus(corpus_id);
    std::istringstream in(store_.read(res));
    pipeline::CorpusInputs inputs;
    inputs.matrix = read_matrix(in);
    if (res.meta.contains("stoplist_path")) {
      std::istringstream words(store_.read(Resource{"", "", res.meta.at("stoplist_path").get<std::string>(), {}}));
      std::string w;
      while (words >> w) inputs.stoplist.push_back(w);
    }
    slot = std::make_unique<pipeline::BatchRunner>(std::move(inputs));
  }
  return *slot;
}

void Service::execute(const std::string& job_id) {
  JobRecord job;
  try {
    job = store_.transition(job_id, JobState::running);
  } catch (const std::exception&) {
    return;
  }
  try {
    const auto spec = pipeline::batch_spec_from_json(job.spec);
    const auto training = parse_table(store_.read(store_.training_set(job.training_set_id)));
    const auto scores = runner_for(job.corpus_id).run(spec, training);
    const auto result = store_.add_score_table(table_csv(scores), job_id);
    store_.transition(job_id, JobState::done, result.id);
  } catch (const std::exception& e) {
    store_.transition(job_id, JobState::failed, {}, e.what());
  }
}

void Service::mount(httplib::Server& server) {
  server.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"ok", true}}); }));

  server.Get("/corpora", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& r : store_.corpora()) out.push_back(resource_json(r));
    send_json(res, 200, out);
  }));

  server.Post("/corpora", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto id = register_corpus(body.at("matrix").get<std::string>(),
                                    body.value("stoplist", std::vector<std::string>{}), body.value("name", ""));
    send_json(res, 201, resource_json(store_.corpus(id)));
  }));

  server.Get("/training-sets", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& r : store_.training_sets()) out.push_back(resource_json(r));
    send_json(res, 200, out);
  }));

  server.Post("/training-sets", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = upload_training_set(req.body);
    send_json(res, 201, resource_json(store_.training_set(id)));
  }));

  server.Get(R"(/training-sets/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto r = store_.training_set(req.matches[1]);
    res.status = 200;
    res.set_content(store_.read(r), "text/csv");
  }));

  server.Post(R"(/training-sets/([^/]+)/clone)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = req.body.empty() ? json::array() : parse_body(req);
    const auto id = clone_training_set(req.matches[1], body);
    send_json(res, 201, resource_json(store_.training_set(id)));
  }));

  server.Post("/jobs", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto id = submit_job(body.value("spec", json::object()), body.at("corpus_id").get<std::string>(),
                               body.at("training_set_id").get<std::string>());
    send_json(res, 202, to_json(store_.job(id)));
  }));

  server.Get("/jobs", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& j : store_.jobs()) out.push_back(to_json(j));
    send_json(res, 200, out);
  }));

  server.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, to_json(store_.job(req.matches[1])));
  }));

  server.Get(R"(/jobs/([^/]+)/scores)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto table = job_scores(req.matches[1]);
    if (req.get_param_value("format") == "csv") {
      res.status = 200;
      res.set_content(table_csv(table), "text/csv");
      return;
    }
    send_json(res, 200, {{"job", req.matches[1]}, {"rows", table_to_json(table)}});
  }));

  server.Get("/eval/corr", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id_a = required_param(req, "job_a"), id_b = required_param(req, "job_b");
    const auto a = job_scores(id_a);
    const auto b = job_scores(id_b);
    std::size_t shared = 0;
    for (const auto& r : a.rows()) shared += b.find(r.key) ? 1 : 0;
    send_json(res, 200, {{"r", eval::pearson(a, b)}, {"n", shared}});
  }));

  server.Get("/eval/discrepancies", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id_a = required_param(req, "job_a"), id_b = required_param(req, "job_b");
    const auto a = job_scores(id_a);
    const auto b = job_scores(id_b);
    const std::size_t top = req.has_param("top") ? std::stoul(req.get_param_value("top")) : 10;
    const auto d = eval::discrepancies(a, b, top);
    auto list = [](const std::vector<eval::Discrepancy>& v) {
      json out = json::array();
      for (const auto& x : v) {
        json row = key_json(x.key);
        row["a"] = x.a;
        row["b"] = x.b;
        row["delta"] = x.delta;
        out.push_back(std::move(row));
      }
      return out;
    };
    send_json(res, 200, {{"largest_positive", list(d.largest_positive)}, {"largest_negative", list(d.largest_negative)}});
  }));

  server.Get("/eval/overlap", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto stats = eval::ci_overlap_stats(job_scores(required_param(req, "job")));
    json counts = json::array();
    for (const auto& [key, c] : stats.counts) {
      json row = key_json(key);
      row["overlaps"] = c;
      counts.push_back(std::move(row));
    }
    send_json(res, 200, {{"mean", stats.mean}, {"counts", counts}});
  }));

  server.Get("/eval/summary", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json out = json::array();
    for (const auto& s : eval::summary_by_year(job_scores(required_param(req, "job")))) {
      out.push_back({{"year", s.year ? json(*s.year) : json("all")},
                     {"n", s.n},
                     {"mean", s.mean},
                     {"std_dev", s.std_dev},
                     {"min", s.min},
                     {"max", s.max}});
    }
    send_json(res, 200, out);
  }));

  if (!config_.static_dir.empty()) server.set_mount_point("/", config_.static_dir.string());
}

void Service::serve() {
  httplib::Server server;
  mount(server);
  if (!server.listen(config_.host, config_.port))
    throw std::runtime_error("cannot listen on " + config_.host + ":" + std::to_string(config_.port));
}

}  // namespace textscale::service
