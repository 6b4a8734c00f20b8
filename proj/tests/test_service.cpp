#include <atomic>
#include <filesystem>
#include <sstream>
#include <set>
#include <thread>

#include <unistd.h>

#include "doctest.h"
#include "oracles/planted.hpp"
#include "textscale/service.hpp"
// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen.
#include "httplib.h"

using namespace textscale;
using namespace textscale::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("textscale-service-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

struct Fixture {
  std::string matrix_text;
  std::string training_csv;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    oracle::PlantedConfig cfg;
    cfg.entities = 12;
    cfg.min_tokens = 100;
    cfg.max_tokens = 300;
    const auto corpus = oracle::make_planted_corpus(cfg);
    std::ostringstream m;
    write_matrix(m, ingest(corpus.docs, {}));
    std::ostringstream t;
    t << "entity,year,score\n";
    for (const auto& r : corpus.latent.rows())
      if (r.key.year == 2000) t << r.key.entity << ',' << r.key.year << ',' << r.score << '\n';
    return Fixture{m.str(), t.str()};
  }();
  return f;
}

// Service plus an HTTP server on an ephemeral loopback port.
class Running {
 public:
  explicit Running(const fs::path& dir, std::size_t workers = 1) : service_(ServiceConfig{dir, workers}) {
    service_.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }

  Service& service() { return service_; }
  httplib::Client& http() { return *client_; }
  int port() const { return port_; }

  json post_json(const std::string& path, const json& body, int expected) {
    auto r = client_->Post(path, body.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == expected);
    return json::parse(r->body);
  }
  json get_json(const std::string& path, int expected = 200) {
    auto r = client_->Get(path);
    REQUIRE(r);
    CHECK(r->status == expected);
    return json::parse(r->body);
  }
  std::string corpus() { return post_json("/corpora", {{"matrix", fixture().matrix_text}, {"name", "planted"}}, 201)["id"]; }
  std::string training() {
    auto r = client_->Post("/training-sets", fixture().training_csv, "text/csv");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body)["id"];
  }
  json run_job(const json& spec, const std::string& corpus, const std::string& training) {
    const auto job = post_json("/jobs", {{"spec", spec}, {"corpus_id", corpus}, {"training_set_id", training}}, 202);
    service_.wait(job["id"]);
    return get_json("/jobs/" + job["id"].get<std::string>());
  }

 private:
  Service service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("training sets are stored byte for byte") {
    Running s(fresh_dir("bytes"));
    const std::string csv = "entity,year,score\r\nB,2000,0.5\r\nA,2000,-1.25000\r\n";
    auto up = s.http().Post("/training-sets", csv, "text/csv");
    REQUIRE(up);
    REQUIRE(up->status == 201);
    const auto meta = json::parse(up->body);
    CHECK(meta["hash"] == sha256_hex(csv));
    auto back = s.http().Get("/training-sets/" + meta["id"].get<std::string>());
    REQUIRE(back);
    CHECK(back->body == csv);

    CHECK(s.http().Post("/training-sets", "entity,year,score\nA,x,1\n", "text/csv")->status == 400);
    CHECK(s.http().Post("/training-sets", "entity,year,score\n", "text/csv")->status == 400);
  }

  TEST_CASE("clones leave the source unchanged") {
    Running s(fresh_dir("clone"));
    const auto id = s.training();
    const auto edits = json::array({{{"entity", fixture().training_csv.substr(18, 3)}, {"year", 2000}, {"remove", true}},
                                    {{"entity", "ZZZ"}, {"year", 2000}, {"score", 0.25}}});
    const auto clone = s.post_json("/training-sets/" + id + "/clone", edits, 201);
    CHECK(clone["id"] != id);
    CHECK(s.http().Get("/training-sets/" + id)->body == fixture().training_csv);
    const auto cloned = s.http().Get("/training-sets/" + clone["id"].get<std::string>())->body;
    CHECK(cloned.find("ZZZ,2000,0.25") != std::string::npos);
    CHECK(cloned.find(fixture().training_csv.substr(18, 4)) == std::string::npos);

    s.post_json("/training-sets/" + id + "/clone", json::array({{{"entity", "NOPE"}, {"year", 1}, {"remove", true}}}),
                400);
    s.post_json("/training-sets/" + id + "/clone", json::array({{{"entity", "A"}, {"year", 1}}}), 400);
  }

  TEST_CASE("unknown ids are not found") {
    Running s(fresh_dir("missing"));
    CHECK(s.get_json("/training-sets/ts-999", 404)["code"] == "not_found");
    CHECK(s.get_json("/jobs/job-999", 404)["code"] == "not_found");
    CHECK(s.get_json("/jobs/job-999/scores", 404)["code"] == "not_found");
    CHECK(s.get_json("/eval/corr?job_a=x&job_b=y", 404)["code"] == "not_found");
    CHECK(s.post_json("/training-sets/ts-999/clone", json::array(), 404)["code"] == "not_found");
    s.post_json("/jobs", {{"corpus_id", "c-404"}, {"training_set_id", "t-404"}}, 404);
    CHECK(s.get_json("/eval/corr?job_a=x", 400)["code"] == "bad_request");
  }

  TEST_CASE("degenerate training sets fail the job") {
    Running s(fresh_dir("degenerate"));
    const auto corpus = s.corpus();
    const auto id = s.training();
    // Two rows with one shared score: no training spread to rescale by.
    std::istringstream in(fixture().training_csv);
    const auto table = eval::read_table_csv(in);
    json edits = json::array();
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto& k = table.rows()[i].key;
      if (i < 2)
        edits.push_back({{"entity", k.entity}, {"year", k.year}, {"score", 0.5}});
      else
        edits.push_back({{"entity", k.entity}, {"year", k.year}, {"remove", true}});
    }
    const auto flat = s.post_json("/training-sets/" + id + "/clone", edits, 201)["id"].get<std::string>();
    const auto job = s.run_job(json::object(), corpus, flat);
    CHECK(job["state"] == "failed");
    CHECK(job["error"].get<std::string>().find("sigma_t") != std::string::npos);
    CHECK(s.get_json("/jobs/" + job["id"].get<std::string>() + "/scores", 409)["code"] == "not_ready");

    edits[1] = {{"entity", table.rows()[1].key.entity}, {"year", 2000}, {"remove", true}};
    const auto single = s.post_json("/training-sets/" + id + "/clone", edits, 201)["id"].get<std::string>();
    CHECK(s.run_job(json::object(), corpus, single)["state"] == "failed");
  }

  TEST_CASE("jobs are deterministic and comparable") {
    Running s(fresh_dir("determinism"), 2);
    const auto corpus = s.corpus();
    const auto ts = s.training();
    for (const json& spec : {json::object(), json{{"approach", "lsa"}, {"k", 4}, {"n", 10}, {"seed", 5}}}) {
      const auto a = s.run_job(spec, corpus, ts), b = s.run_job(spec, corpus, ts);
      REQUIRE(a["state"] == "done");
      REQUIRE(b["state"] == "done");
      const auto ia = a["id"].get<std::string>(), ib = b["id"].get<std::string>();
      CHECK(s.http().Get("/jobs/" + ia + "/scores?format=csv")->body ==
            s.http().Get("/jobs/" + ib + "/scores?format=csv")->body);
      const auto corr = s.get_json("/eval/corr?job_a=" + ia + "&job_b=" + ib);
      CHECK(corr["r"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(corr["n"] == 12);
      const auto rows = s.get_json("/jobs/" + ia + "/scores")["rows"];
      CHECK(rows.size() == 12);
      const auto summary = s.get_json("/eval/summary?job=" + ia);
      CHECK(summary.back()["year"] == "all");
      const auto d = s.get_json("/eval/discrepancies?job_a=" + ia + "&job_b=" + ib + "&top=3");
      CHECK(d["largest_positive"].size() == 3);
      CHECK(d["largest_positive"][0]["delta"] == 0.0);
    }
    const auto ws = s.service().store().jobs().front().id;
    const auto overlap = s.get_json("/eval/overlap?job=" + ws);
    CHECK(overlap["counts"].size() == 12);
    CHECK(s.get_json("/health")["ok"] == true);
  }

  TEST_CASE("state survives a restart") {
    const auto dir = fresh_dir("restart");
    std::string job_id, csv, manifest;
    {
      Running s(dir);
      const auto job = s.run_job(json::object(), s.corpus(), s.training());
      REQUIRE(job["state"] == "done");
      job_id = job["id"];
      csv = s.http().Get("/jobs/" + job_id + "/scores?format=csv")->body;
      manifest = s.http().Get("/jobs")->body;
    }
    Running again(dir);
    CHECK(again.http().Get("/jobs")->body == manifest);
    CHECK(again.http().Get("/jobs/" + job_id + "/scores?format=csv")->body == csv);
    CHECK(again.get_json("/training-sets").size() == 1);
    CHECK(again.get_json("/corpora").size() == 1);
    CHECK(again.service().store().verify().empty());
  }

  TEST_CASE("concurrent submissions keep the manifest valid") {
    const auto dir = fresh_dir("concurrent");
    {
      Running s(dir, 3);
      const auto corpus = s.corpus();
      const auto ts = s.training();
      std::vector<std::thread> clients;
      std::atomic<int> accepted{0};
      for (int c = 0; c < 4; ++c) {
        clients.emplace_back([&, c] {
          httplib::Client http("127.0.0.1", s.port());
          for (int i = 0; i < 3; ++i) {
            const json body{{"spec", {{"seed", c * 10 + i}}}, {"corpus_id", corpus}, {"training_set_id", ts}};
            auto r = http.Post("/jobs", body.dump(), "application/json");
            if (r && r->status == 202) ++accepted;
          }
        });
      }
      for (auto& t : clients) t.join();
      CHECK(accepted == 12);
      for (const auto& j : s.service().store().jobs()) CHECK(s.service().wait(j.id).state == JobState::done);
    }
    Store reopened(dir);
    const auto jobs = reopened.jobs();
    CHECK(jobs.size() == 12);
    std::set<std::string> ids;
    for (const auto& j : jobs) ids.insert(j.id);
    CHECK(ids.size() == 12);
    CHECK(reopened.verify().empty());
  }

  TEST_CASE("interrupted jobs are marked failed on restart") {
    const auto dir = fresh_dir("recover");
    std::string running_id, queued_id;
    {
      Store store(dir);
      const auto c = store.add_corpus(fixture().matrix_text, {}, "x");
      const auto t = store.add_training_set(fixture().training_csv);
      running_id = store.create_job(json::object(), c.id, t.id).id;
      store.transition(running_id, JobState::running);
      queued_id = store.create_job(json::object(), c.id, t.id).id;
    }
    Service s(ServiceConfig{dir, 1});
    CHECK(s.get_job(running_id).state == JobState::failed);
    CHECK(s.wait(queued_id).state == JobState::done);
    CHECK_THROWS(s.store().transition(queued_id, JobState::running));
  }
}
