#include <doctest.h>

#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "cbr/errors.hpp"
#include "cbr/service.hpp"
#include "temp_dir.hpp"

using nlohmann::json;

namespace {

std::shared_ptr<cbr::Retriever> stub_retriever() {
  return std::make_shared<cbr::Retriever>(
      std::make_shared<cbr::EmbeddingService>(std::make_shared<cbr::StubEmbedder>(32)));
}

class FailingGenerator final : public cbr::Generator {
 public:
  std::string id() const override { return "failing"; }
  std::string complete(const cbr::GenerationRequest&, const std::string&) override {
    throw cbr::LlmServiceUnavailable("backend down");
  }
};

cbr::CaseBank seeded_bank() {
  cbr::CaseBank bank;
  bank.retain("verify bgp peer comes up", "bgp.connect()\nbgp.check_peer()\n",
              {std::nullopt, cbr::CaseSource::seed, "seed-1"});
  bank.retain("verify ospf adjacency", "ospf.enable()\n", {std::nullopt, cbr::CaseSource::seed, "seed-2"});
  return bank;
}

cbr::ReviewService make_service(cbr::CaseBank bank, std::shared_ptr<cbr::Generator> gen = nullptr,
                                std::optional<std::filesystem::path> journal = std::nullopt) {
  if (!gen) gen = std::make_shared<cbr::CopyTopCaseGenerator>();
  cbr::ServiceOptions options;
  options.journal = std::move(journal);
  return cbr::ReviewService(std::move(bank), stub_retriever(), std::move(gen), options);
}

// HttpServer on a free port, serving on a background thread.
class RunningServer {
 public:
  RunningServer(cbr::ReviewService& service, std::string static_dir = "")
      : server_(service, cbr::HttpServerOptions{"127.0.0.1", 0, std::move(static_dir), 7}) {
    port_ = server_.bind();
    thread_ = std::thread([this] { server_.serve(); });
    for (int i = 0; i < 200 && !server_.running(); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
  ~RunningServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  cbr::HttpServer server_;
  int port_ = -1;
  std::thread thread_;
};

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("config parsing and environment overrides") {
    auto map = cbr::parse_config("# comment\nretrieval.m = 5\n\nllm.backend=noisy\n");
    CHECK(map.at("retrieval.m") == "5");
    CHECK_THROWS_AS((void)cbr::parse_config("nope = 1\n"), cbr::ConfigError);
    CHECK_THROWS_AS((void)cbr::parse_config("retrieval.m 5\n"), cbr::ConfigError);

    CHECK(cbr::env_name_for("retrieval.m") == "CBR_RETRIEVAL_M");
    cbr::apply_env_overrides(map, [](const char* name) -> const char* {
      return std::string_view(name) == "CBR_RETRIEVAL_M" ? "7" : nullptr;
    });
    const auto config = cbr::service_config_from(map);
    CHECK(config.retrieval_m == 7);
    CHECK(config.llm_backend == "noisy");
    CHECK(config.retrieval_k == 10);
    CHECK(config.infonce_tau == 1.0);
    CHECK(config.rl_beta == 0.1);

    map["retrieval.m"] = "many";
    CHECK_THROWS_AS((void)cbr::service_config_from(map), cbr::ConfigError);
    for (const auto& key : cbr::config_keys()) CHECK(cbr::parse_config(key + " = x\n").size() == 1);
  }

  TEST_CASE("session state machine") {
    auto service = make_service(seeded_bank());
    const auto s = service.generate("verify bgp peer after reset");
    CHECK(s.status == cbr::SessionStatus::drafted);
    CHECK(s.draft == "bgp.connect()\nbgp.check_peer()\n");
    CHECK_FALSE(s.low_confidence);
    CHECK(s.retrieved.size() == 2);

    const auto revised = service.revise(s.id, "bgp.connect()\n");
    CHECK(revised.status == cbr::SessionStatus::revised);
    const auto case_id = service.retain(s.id, "bgp.connect()\n");
    CHECK(case_id == cbr::session_case_id(s.id));
    CHECK(case_id == "case-" + s.id);
    CHECK_THROWS_AS((void)service.retain(s.id, "x()"), cbr::InvalidTransition);
    CHECK_THROWS_AS((void)service.revise(s.id, "x()"), cbr::InvalidTransition);
    CHECK_THROWS_AS((void)service.discard(s.id), cbr::InvalidTransition);
    CHECK_THROWS_AS((void)service.retain("missing", "x()"), cbr::SessionNotFound);

    const auto d = service.generate("another intent");
    CHECK(service.discard(d.id).status == cbr::SessionStatus::discarded);
    CHECK_THROWS_AS((void)service.retain(d.id, "x()"), cbr::InvalidTransition);
    CHECK_THROWS_AS((void)service.generate("   "), cbr::InvalidArgument);
  }

  TEST_CASE("retain records the source and the draft-vs-final FF1") {
    auto service = make_service(seeded_bank());
    const auto a = service.generate("verify bgp peer");
    service.retain(a.id, a.draft);
    const auto b = service.generate("verify bgp peer again");
    service.retain(b.id, "bgp.connect()\n");  // two calls -> one

    const auto view = service.bank().snapshot();
    CHECK(view.find("case-" + a.id)->source == cbr::CaseSource::retained);
    CHECK(view.find("case-" + b.id)->source == cbr::CaseSource::revised);

    const auto m = service.metrics();
    REQUIRE(m.draft_vs_final_ff1.size() == 2);
    CHECK(m.draft_vs_final_ff1[0] == 1.0);
    CHECK(std::abs(m.draft_vs_final_ff1[1] - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(*m.mean_draft_vs_final_ff1 - 5.0 / 6.0) < 1e-12);
    CHECK(m.cases == 4);
    CHECK(m.by_status.at("retained") == 2);
  }

  TEST_CASE("empty bank and identical requests") {
    auto service = make_service(cbr::CaseBank{});
    const auto a = service.generate("same intent");
    const auto b = service.generate("same intent");
    CHECK(a.low_confidence);
    CHECK(a.retrieved.empty());
    CHECK(a.id != b.id);
    CHECK(a.draft == b.draft);
  }

  TEST_CASE("paged case listing") {
    cbr::CaseBank bank;
    for (int i = 0; i < 7; ++i) bank.retain("intent " + std::to_string(i), "f()");
    auto service = make_service(std::move(bank));
    const auto page = service.cases(5, 10);
    CHECK(page.total == 7);
    CHECK(page.items.size() == 2);
    CHECK(service.cases(10, 3).items.empty());
  }

  TEST_CASE("journal replay restores sessions and reconciles crashed retains") {
    TempDir dir;
    const auto bank_path = dir / "cases.jsonl";
    const auto journal_path = dir / "sessions.jsonl";
    std::string retained_id, open_id, crashed_id;
    {
      auto service = make_service(cbr::CaseBank::open(bank_path), nullptr, journal_path);
      service.bank();
      const auto s1 = service.generate("first");
      retained_id = s1.id;
      service.retain(s1.id, "a()\nb()\n");
      open_id = service.generate("second").id;
      crashed_id = service.generate("third").id;
    }
    // Simulate a crash between the case write and the journal entry.
    {
      auto bank = cbr::CaseBank::open(bank_path);
      bank.retain("third", "c()\n", {std::nullopt, cbr::CaseSource::revised, "case-" + crashed_id});
    }
    std::ofstream(journal_path, std::ios::app) << "{\"session_id\": \"torn";

    auto service = make_service(cbr::CaseBank::open(bank_path), nullptr, journal_path);
    CHECK(service.session(retained_id)->status == cbr::SessionStatus::retained);
    CHECK(service.session(open_id)->status == cbr::SessionStatus::drafted);
    const auto crashed = service.session(crashed_id);
    REQUIRE(crashed);
    CHECK(crashed->status == cbr::SessionStatus::retained);
    CHECK(crashed->case_id == "case-" + crashed_id);
    CHECK_THROWS_AS((void)service.retain(crashed_id, "c()\n"), cbr::InvalidTransition);
    CHECK(service.metrics().draft_vs_final_ff1.size() == 2);
    CHECK(service.bank().size() == 2);
  }

  TEST_CASE("HTTP round trip") {
    TempDir dir;
    std::filesystem::create_directories(dir / "static");
    std::ofstream(dir / "static" / "index.html") << "<html>review</html>";
    auto service = make_service(seeded_bank());
    RunningServer running(service, (dir / "static").string());
    auto client = running.client();

    auto res = client.Post("/v1/generate", R"({"intent": "verify bgp peer"})", "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto session = json::parse(res->body);
    const std::string id = session["session_id"];
    CHECK(session["status"] == "drafted");
    CHECK(session["retrieved"].size() == 2);
    CHECK(session["retrieved"][0].contains("similarity"));

    res = client.Get("/v1/sessions/" + id);
    REQUIRE(res);
    CHECK(res->status == 200);

    res = client.Post("/v1/sessions/" + id + "/retain", json{{"final_script", "bgp.connect()\n"}}.dump(),
                      "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["case_id"] == "case-" + id);

    res = client.Post("/v1/sessions/" + id + "/retain", json{{"final_script", "x()"}}.dump(),
                      "application/json");
    REQUIRE(res);
    CHECK(res->status == 409);
    CHECK(json::parse(res->body)["error"]["code"] == "conflict");

    res = client.Get("/v1/metrics");
    REQUIRE(res);
    const auto metrics = json::parse(res->body);
    CHECK(std::abs(metrics["draft_vs_final_ff1"][0].get<double>() - 2.0 / 3.0) < 1e-12);

    res = client.Get("/v1/cases?offset=1&limit=1");
    REQUIRE(res);
    const auto page = json::parse(res->body);
    CHECK(page["total"] == 3);
    CHECK(page["items"].size() == 1);
    CHECK(page["items"][0]["id"] == "seed-2");
    res = client.Get("/v1/cases");
    CHECK(json::parse(res->body)["items"].size() == 3);
    res = client.Get("/v1/cases?limit=abc");
    CHECK(res->status == 422);

    res = client.Post("/v1/generate", R"({"intent": ""})", "application/json");
    CHECK(res->status == 422);
    res = client.Post("/v1/generate", R"({"intent": 3})", "application/json");
    CHECK(res->status == 422);
    res = client.Post("/v1/generate", "{not json", "application/json");
    CHECK(res->status == 400);
    res = client.Post("/v1/sessions/nope/retain", json{{"final_script", "x()"}}.dump(), "application/json");
    CHECK(res->status == 404);
    CHECK(json::parse(res->body)["error"]["code"] == "not_found");

    res = client.Get("/index.html");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "<html>review</html>");
    res = client.Get("/healthz");
    CHECK(res->status == 200);
  }

  TEST_CASE("HTTP maps an unavailable backend to 503 with Retry-After") {
    auto service = make_service(seeded_bank(), std::make_shared<FailingGenerator>());
    RunningServer running(service);
    auto client = running.client();
    auto res = client.Post("/v1/generate", R"({"intent": "anything"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 503);
    CHECK(res->get_header_value("Retry-After") == "7");
    CHECK(json::parse(res->body)["error"]["code"] == "backend_unavailable");
  }

  TEST_CASE("missing static directory is rejected") {
    auto service = make_service(seeded_bank());
    CHECK_THROWS_AS(cbr::HttpServer(service, {"127.0.0.1", 0, "/definitely/not/here", 5}),
                    cbr::StorageFailure);
  }
}
