#include "cbr/service.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>

#include "cbr/errors.hpp"
#include "cbr/metrics.hpp"
#include "cbr/script_analysis.hpp"

namespace cbr {

using nlohmann::json;

// ---------------------------------------------------------------- config

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "retrieval.m",         "retrieval.k",           "infonce.tau",
      "rl.beta",             "llm.backend",           "llm.base_url",
      "llm.model",           "llm.temperature",       "llm.max_tokens",
      "llm.timeout_ms",      "llm.max_retries",       "llm.backoff_ms",
      "embedding.backend",   "embedding.base_url",    "embedding.model",
      "embedding.dimension", "embedding.timeout_ms",  "embedding.max_retries",
      "embedding.adapter",   "reuse.prompt_budget_chars", "bank.path",
      "journal.path",        "server.host",           "server.port",
      "server.static_dir"};
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool known_key(std::string_view key) {
  const auto& keys = config_keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

}  // namespace

ConfigMap parse_config(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line =
        trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (!known_key(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    out[std::move(key)] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string env_name_for(std::string_view key) {
  std::string out = "CBR_";
  for (char c : key) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

void apply_env_overrides(ConfigMap& config, const EnvLookup& lookup) {
  for (const auto& key : config_keys()) {
    if (const char* value = lookup(env_name_for(key).c_str())) config[key] = value;
  }
}

namespace {

template <typename T>
T parse_number(const ConfigMap& config, std::string_view key, T fallback) {
  const auto it = config.find(key);
  if (it == config.end()) return fallback;
  T value{};
  const auto& text = it->second;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + text + "'");
  }
  return value;
}

std::string parse_string(const ConfigMap& config, std::string_view key, std::string fallback) {
  const auto it = config.find(key);
  return it == config.end() ? fallback : it->second;
}

}  // namespace

ServiceConfig service_config_from(const ConfigMap& config) {
  for (const auto& [key, value] : config) {
    if (!known_key(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  ServiceConfig c;
  c.retrieval_m = parse_number(config, "retrieval.m", c.retrieval_m);
  c.retrieval_k = parse_number(config, "retrieval.k", c.retrieval_k);
  c.infonce_tau = parse_number(config, "infonce.tau", c.infonce_tau);
  c.rl_beta = parse_number(config, "rl.beta", c.rl_beta);
  c.llm_backend = parse_string(config, "llm.backend", c.llm_backend);
  c.llm.base_url = parse_string(config, "llm.base_url", c.llm.base_url);
  c.llm.model = parse_string(config, "llm.model", c.llm.model);
  c.llm.temperature = parse_number(config, "llm.temperature", c.llm.temperature);
  c.llm.max_tokens = parse_number(config, "llm.max_tokens", c.llm.max_tokens);
  c.llm.timeout_ms = parse_number(config, "llm.timeout_ms", c.llm.timeout_ms);
  c.llm.max_retries = parse_number(config, "llm.max_retries", c.llm.max_retries);
  c.llm.backoff_ms = parse_number(config, "llm.backoff_ms", c.llm.backoff_ms);
  c.embedding_backend = parse_string(config, "embedding.backend", c.embedding_backend);
  c.embedding.base_url = parse_string(config, "embedding.base_url", c.embedding.base_url);
  c.embedding.model = parse_string(config, "embedding.model", c.embedding.model);
  c.embedding.dimension = parse_number(config, "embedding.dimension", c.embedding.dimension);
  c.embedding.timeout_ms = parse_number(config, "embedding.timeout_ms", c.embedding.timeout_ms);
  c.embedding.max_retries = parse_number(config, "embedding.max_retries", c.embedding.max_retries);
  c.embedding_adapter = parse_string(config, "embedding.adapter", c.embedding_adapter);
  c.prompt_budget_chars =
      parse_number(config, "reuse.prompt_budget_chars", c.prompt_budget_chars);
  c.bank_path = parse_string(config, "bank.path", c.bank_path);
  c.journal_path = parse_string(config, "journal.path", c.journal_path);
  c.server_host = parse_string(config, "server.host", c.server_host);
  c.server_port = parse_number(config, "server.port", c.server_port);
  c.static_dir = parse_string(config, "server.static_dir", c.static_dir);

  if (c.retrieval_m < 1) throw ConfigError("retrieval.m must be >= 1");
  if (c.retrieval_k < 1) throw ConfigError("retrieval.k must be >= 1");
  if (!(c.infonce_tau > 0.0)) throw ConfigError("infonce.tau must be > 0");
  if (c.rl_beta < 0.0) throw ConfigError("rl.beta must be >= 0");
  if (c.embedding.dimension < 1) throw ConfigError("embedding.dimension must be >= 1");
  if (c.llm_backend != "copy-top" && c.llm_backend != "noisy" && c.llm_backend != "llm") {
    throw ConfigError("llm.backend must be copy-top, noisy or llm");
  }
  if (c.embedding_backend != "stub" && c.embedding_backend != "http") {
    throw ConfigError("embedding.backend must be stub or http");
  }
  return c;
}

std::shared_ptr<Retriever> make_retriever(const ServiceConfig& config) {
  std::shared_ptr<EmbeddingBackend> backend;
  if (config.embedding_backend == "http") {
    backend = std::make_shared<HttpEmbedder>(config.embedding);
  } else {
    backend = std::make_shared<StubEmbedder>(config.embedding.dimension);
  }
  auto service = std::make_shared<EmbeddingService>(std::move(backend));
  if (!config.embedding_adapter.empty()) {
    std::ifstream in(config.embedding_adapter, std::ios::binary);
    if (!in) throw ConfigError("cannot open adapter '" + config.embedding_adapter + "'");
    service->set_adapter(Adapter::from_json(json::parse(in)));
  }
  return std::make_shared<Retriever>(std::move(service));
}

std::shared_ptr<Generator> make_generator(const ServiceConfig& config) {
  if (config.llm_backend == "llm") return std::make_shared<LlmGenerator>(config.llm);
  if (config.llm_backend == "noisy") return std::make_shared<NoisyGenerator>(0.8, 0.2, 0);
  return std::make_shared<CopyTopCaseGenerator>();
}

// ---------------------------------------------------------------- sessions

std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::drafted:
      return "drafted";
    case SessionStatus::revised:
      return "revised";
    case SessionStatus::retained:
      return "retained";
    case SessionStatus::discarded:
      return "discarded";
  }
  return "drafted";
}

SessionStatus session_status_from_string(std::string_view text) {
  for (auto s : {SessionStatus::drafted, SessionStatus::revised, SessionStatus::retained,
                 SessionStatus::discarded}) {
    if (to_string(s) == text) return s;
  }
  throw InvalidArgument("unknown session status '" + std::string(text) + "'");
}

json to_json(const ReviewSession& s) {
  json retrieved = json::array();
  for (const auto& r : s.retrieved) {
    retrieved.push_back(json{{"case_id", r.item.id},
                             {"intent", r.item.intent},
                             {"script", r.item.script},
                             {"source", to_string(r.item.source)},
                             {"similarity", r.similarity}});
  }
  json j{{"session_id", s.id},
         {"intent", s.intent},
         {"retrieved", std::move(retrieved)},
         {"retrieval_revision", s.retrieval_revision},
         {"draft", s.draft},
         {"low_confidence", s.low_confidence},
         {"repetitive_draft", s.repetitive_draft},
         {"status", to_string(s.status)},
         {"created_at", s.created_at}};
  j["revised_script"] = s.revised_script ? json(*s.revised_script) : json(nullptr);
  j["case_id"] = s.case_id ? json(*s.case_id) : json(nullptr);
  j["draft_vs_final_ff1"] = s.draft_vs_final_ff1 ? json(*s.draft_vs_final_ff1) : json(nullptr);
  return j;
}

ReviewSession session_from_json(const json& j) {
  ReviewSession s;
  s.id = j.at("session_id").get<std::string>();
  s.intent = j.at("intent").get<std::string>();
  for (const auto& r : j.at("retrieved")) {
    RetrievedCase rc;
    rc.item.id = r.at("case_id").get<std::string>();
    rc.item.intent = r.at("intent").get<std::string>();
    rc.item.script = r.at("script").get<std::string>();
    rc.item.source = case_source_from_string(r.at("source").get<std::string>());
    rc.similarity = r.at("similarity").get<double>();
    s.retrieved.push_back(std::move(rc));
  }
  s.retrieval_revision = j.at("retrieval_revision").get<std::uint64_t>();
  s.draft = j.at("draft").get<std::string>();
  s.low_confidence = j.at("low_confidence").get<bool>();
  s.repetitive_draft = j.at("repetitive_draft").get<bool>();
  s.status = session_status_from_string(j.at("status").get<std::string>());
  s.created_at = j.at("created_at").get<std::string>();
  if (!j.at("revised_script").is_null()) s.revised_script = j["revised_script"].get<std::string>();
  if (!j.at("case_id").is_null()) s.case_id = j["case_id"].get<std::string>();
  if (!j.at("draft_vs_final_ff1").is_null()) {
    s.draft_vs_final_ff1 = j["draft_vs_final_ff1"].get<double>();
  }
  return s;
}

json to_json(const ServiceMetrics& m) {
  json j{{"sessions", m.sessions},
         {"by_status", m.by_status},
         {"cases", m.cases},
         {"bank_revision", m.bank_revision},
         {"draft_vs_final_ff1", m.draft_vs_final_ff1},
         {"draft_repetition_rate", m.draft_repetition_rate}};
  j["mean_draft_vs_final_ff1"] =
      m.mean_draft_vs_final_ff1 ? json(*m.mean_draft_vs_final_ff1) : json(nullptr);
  return j;
}

std::string session_case_id(std::string_view session_id) {
  return "case-" + std::string(session_id);
}

ReviewService::ReviewService(CaseBank bank, std::shared_ptr<Retriever> retriever,
                             std::shared_ptr<Generator> generator, ServiceOptions options)
    : bank_(std::move(bank)),
      retriever_(std::move(retriever)),
      generator_(std::move(generator)),
      options_(std::move(options)),
      id_state_(std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32)) {
  if (!retriever_ || !generator_) throw InvalidArgument("service needs a retriever and a generator");
  if (options_.m < 1) throw InvalidArgument("M must be >= 1");
  replay_journal();
}

std::string ReviewService::new_session_id() {
  // splitmix64 over a randomly seeded counter.
  std::uint64_t z = (id_state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
  return buf;
}

void ReviewService::journal(const ReviewSession& s) {
  if (!options_.journal) return;
  std::ofstream out(*options_.journal, std::ios::binary | std::ios::app);
  if (!out) throw StorageFailure("cannot append to journal '" + options_.journal->string() + "'");
  out << to_json(s).dump() << '\n';
  out.flush();
}

void ReviewService::replay_journal() {
  if (!options_.journal || !std::filesystem::exists(*options_.journal)) return;
  std::ifstream in(*options_.journal, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ReviewSession s;
    try {
      s = session_from_json(json::parse(line));
    } catch (const std::exception&) {
      continue;  // torn trailing write
    }
    const bool newly_retained = s.status == SessionStatus::retained &&
                                (!sessions_.contains(s.id) ||
                                 sessions_[s.id].status != SessionStatus::retained);
    if (newly_retained) retain_order_.push_back(s.id);
    sessions_[s.id] = std::move(s);
  }

  // A crash after the case write but before the journal entry leaves an open
  // session whose case already exists.
  const auto view = bank_.snapshot();
  for (auto& [id, s] : sessions_) {
    if (s.status == SessionStatus::retained || s.status == SessionStatus::discarded) continue;
    const Case* c = view.find(session_case_id(id));
    if (c == nullptr) continue;
    s.status = SessionStatus::retained;
    s.case_id = c->id;
    if (c->script != s.draft) s.revised_script = c->script;
    s.draft_vs_final_ff1 = function_f1(extract_functions(s.draft), extract_functions(c->script));
    retain_order_.push_back(id);
    journal(s);
  }
}

ReviewSession ReviewService::generate(std::string intent) {
  if (trim(intent).empty()) throw InvalidArgument("intent must be nonempty");
  const auto view = bank_.snapshot();
  RetrievalResult top;
  if (!view.empty()) top = retriever_->retrieve_top_k(view, intent, options_.m);
  top.query_revision = view.revision();
  auto record = cbr::generate(make_request(intent, top, view, options_.m), *generator_,
                              options_.reuse);

  ReviewSession s;
  s.intent = std::move(intent);
  s.retrieved = std::move(record.request.retrieved);
  s.retrieval_revision = view.revision();
  s.draft = std::move(record.draft);
  s.low_confidence = s.retrieved.empty();
  s.repetitive_draft = detect_repetition_default(s.draft).is_repetitive;
  s.created_at = rfc3339_now();

  std::lock_guard lock(mutex_);
  s.id = new_session_id();
  while (sessions_.contains(s.id)) s.id = new_session_id();
  journal(s);
  sessions_[s.id] = s;
  return s;
}

ReviewSession& ReviewService::find_open(std::string_view id) {
  const auto it = sessions_.find(std::string(id));
  if (it == sessions_.end()) throw SessionNotFound("no session '" + std::string(id) + "'");
  if (it->second.status == SessionStatus::retained ||
      it->second.status == SessionStatus::discarded) {
    throw InvalidTransition("session '" + std::string(id) + "' is already " +
                            std::string(to_string(it->second.status)));
  }
  return it->second;
}

ReviewSession ReviewService::revise(std::string_view id, std::string script) {
  std::lock_guard lock(mutex_);
  ReviewSession& s = find_open(id);
  s.revised_script = std::move(script);
  s.status = SessionStatus::revised;
  journal(s);
  return s;
}

std::string ReviewService::retain(std::string_view id, std::string final_script) {
  std::lock_guard lock(mutex_);
  ReviewSession& s = find_open(id);
  const std::string case_id = session_case_id(s.id);
  const CaseSource source = final_script == s.draft ? CaseSource::retained : CaseSource::revised;
  try {
    bank_.retain(s.intent, final_script, CaseBank::RetainOptions{std::nullopt, source, case_id});
  } catch (const DuplicateCaseId&) {
    throw InvalidTransition("session '" + s.id + "' was already retained");
  }
  if (after_case_write_) after_case_write_();

  s.status = SessionStatus::retained;
  s.case_id = case_id;
  if (source == CaseSource::revised) s.revised_script = final_script;
  s.draft_vs_final_ff1 = function_f1(extract_functions(s.draft), extract_functions(final_script));
  retain_order_.push_back(s.id);
  journal(s);
  return case_id;
}

ReviewSession ReviewService::discard(std::string_view id) {
  std::lock_guard lock(mutex_);
  ReviewSession& s = find_open(id);
  s.status = SessionStatus::discarded;
  journal(s);
  return s;
}

std::optional<ReviewSession> ReviewService::session(std::string_view id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(std::string(id));
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

CasePage ReviewService::cases(std::size_t offset, std::size_t limit) const {
  const auto view = bank_.snapshot();
  CasePage page;
  page.total = view.size();
  page.offset = offset;
  page.limit = limit;
  for (std::size_t i = offset; i < view.size() && i - offset < limit; ++i) {
    page.items.push_back(view[i]);
  }
  return page;
}

ServiceMetrics ReviewService::metrics() const {
  std::lock_guard lock(mutex_);
  ServiceMetrics m;
  for (auto s : {SessionStatus::drafted, SessionStatus::revised, SessionStatus::retained,
                 SessionStatus::discarded}) {
    m.by_status[std::string(to_string(s))] = 0;
  }
  std::size_t repetitive = 0;
  for (const auto& [id, s] : sessions_) {
    ++m.sessions;
    ++m.by_status[std::string(to_string(s.status))];
    repetitive += s.repetitive_draft ? 1 : 0;
  }
  for (const auto& id : retain_order_) {
    const auto& s = sessions_.at(id);
    if (s.draft_vs_final_ff1) m.draft_vs_final_ff1.push_back(*s.draft_vs_final_ff1);
  }
  if (!m.draft_vs_final_ff1.empty()) {
    double total = 0.0;
    for (double v : m.draft_vs_final_ff1) total += v;
    m.mean_draft_vs_final_ff1 = total / static_cast<double>(m.draft_vs_final_ff1.size());
  }
  m.draft_repetition_rate =
      m.sessions == 0 ? 0.0 : static_cast<double>(repetitive) / static_cast<double>(m.sessions);
  m.cases = bank_.size();
  m.bank_revision = bank_.revision();
  return m;
}

// ---------------------------------------------------------------- HTTP

struct HttpServer::Impl {
  Impl(ReviewService& s, HttpServerOptions o) : service(s), options(std::move(o)) {}
  ReviewService& service;
  HttpServerOptions options;
  httplib::Server server;
  int port = -1;
};

namespace {

void send_error(httplib::Response& res, int status, std::string_view code,
                std::string_view message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                  "application/json");
}

void send_json(httplib::Response& res, const json& body) {
  res.status = 200;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  json body = json::parse(req.body);
  if (!body.is_object()) throw InvalidArgument("request body must be a JSON object");
  return body;
}

std::string string_field(const json& body, std::string_view name) {
  const auto it = body.find(name);
  if (it == body.end() || !it->is_string()) {
    throw InvalidArgument("field '" + std::string(name) + "' must be a string");
  }
  return it->get<std::string>();
}

std::size_t size_param(const httplib::Request& req, const std::string& name, std::size_t fallback,
                       std::size_t max) {
  if (!req.has_param(name)) return fallback;
  const std::string text = req.get_param_value(name);
  std::size_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw InvalidArgument("query parameter '" + name + "' must be a non-negative integer");
  }
  return std::min(value, max);
}

template <typename F>
httplib::Server::Handler guarded(int retry_after, F&& body) {
  return [retry_after, body = std::forward<F>(body)](const httplib::Request& req,
                                                      httplib::Response& res) {
    try {
      body(req, res);
    } catch (const json::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const SessionNotFound& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const InvalidTransition& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const InvalidArgument& e) {
      send_error(res, 422, "invalid_request", e.what());
    } catch (const InvalidCase& e) {
      send_error(res, 422, "invalid_request", e.what());
    } catch (const ContextOverflow& e) {
      send_error(res, 422, "context_overflow", e.what());
    } catch (const Error& e) {
      if (e.retryable()) {
        res.set_header("Retry-After", std::to_string(retry_after));
        send_error(res, 503, "backend_unavailable", e.what());
      } else {
        send_error(res, 500, "internal", e.what());
      }
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json case_json(const Case& c) {
  return json{{"id", c.id},
              {"intent", c.intent},
              {"script", c.script},
              {"source", to_string(c.source)},
              {"created_at", c.created_at}};
}

}  // namespace

HttpServer::HttpServer(ReviewService& service, HttpServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& svr = impl_->server;
  auto& svc = impl_->service;
  const int ra = impl_->options.retry_after_seconds;

  svr.Post("/v1/generate", guarded(ra, [&svc](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto s = svc.generate(string_field(body, "intent"));
             json out = to_json(s);
             send_json(res, out);
           }));
  svr.Post(R"(/v1/sessions/([^/]+)/retain)",
           guarded(ra, [&svc](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto case_id = svc.retain(req.matches[1].str(), string_field(body, "final_script"));
             send_json(res, json{{"case_id", case_id}});
           }));
  svr.Post(R"(/v1/sessions/([^/]+)/revise)",
           guarded(ra, [&svc](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             send_json(res, to_json(svc.revise(req.matches[1].str(), string_field(body, "script"))));
           }));
  svr.Post(R"(/v1/sessions/([^/]+)/discard)",
           guarded(ra, [&svc](const httplib::Request& req, httplib::Response& res) {
             send_json(res, to_json(svc.discard(req.matches[1].str())));
           }));
  svr.Get(R"(/v1/sessions/([^/]+))",
          guarded(ra, [&svc](const httplib::Request& req, httplib::Response& res) {
            const auto s = svc.session(req.matches[1].str());
            if (!s) throw SessionNotFound("no session '" + req.matches[1].str() + "'");
            send_json(res, to_json(*s));
          }));
  svr.Get("/v1/metrics", guarded(ra, [&svc](const httplib::Request&, httplib::Response& res) {
            send_json(res, to_json(svc.metrics()));
          }));
  svr.Get("/v1/cases", guarded(ra, [&svc](const httplib::Request& req, httplib::Response& res) {
            const auto page = svc.cases(size_param(req, "offset", 0, static_cast<std::size_t>(-1)),
                                        size_param(req, "limit", 50, 500));
            json items = json::array();
            for (const auto& c : page.items) items.push_back(case_json(c));
            send_json(res, json{{"total", page.total},
                                {"offset", page.offset},
                                {"limit", page.limit},
                                {"items", std::move(items)}});
          }));
  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, json{{"status", "ok"}});
  });

  if (!impl_->options.static_dir.empty() &&
      !svr.set_mount_point("/", impl_->options.static_dir)) {
    throw StorageFailure("static directory '" + impl_->options.static_dir + "' does not exist");
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) {
    throw StorageFailure("cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return impl_->port;
}

void HttpServer::serve() {
  if (impl_->port < 0) bind();
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace cbr
