#include "cbr/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "cbr/errors.hpp"

namespace cbr {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 20> kModuleNames = {
    "ospf", "bgp",  "vlan", "lldp", "stp",  "acl",  "qos",  "nat",  "isis",   "mpls",
    "vrrp", "lacp", "bfd",  "pim",  "igmp", "dhcp", "ntp",  "snmp", "syslog", "aaa"};

constexpr std::array<std::string_view, 10> kVerbs = {
    "configure", "verify", "enable", "disable", "reset",
    "query",     "apply",  "clear",  "create",  "delete"};

constexpr std::array<std::string_view, 10> kNouns = {
    "interface", "neighbor", "route", "session", "policy",
    "counter",   "timer",    "table", "peer",    "filter"};

constexpr std::array<std::string_view, 20> kTopics = {
    "adjacency",  "failover", "convergence", "authentication", "redistribution",
    "timers",     "flapping", "scaling",     "summarization",  "filtering",
    "recovery",   "priority", "aging",       "dampening",      "hashing",
    "throttling", "election", "leasing",     "tracking",       "mirroring"};

constexpr std::array<std::string_view, 5> kIntentVerbs = {"Verify", "Check", "Ensure", "Validate",
                                                          "Test"};

constexpr std::array<std::string_view, 6> kPhrases = {
    "after a reboot",        "under load",           "on the lab topology",
    "with default settings", "across two devices",   "in steady state"};

constexpr std::array<std::string_view, 24> kFillers = {
    "quickly", "default", "lab",     "device",  "setup",   "traffic", "steady",  "primary",
    "remote",  "local",   "config",  "status",  "nightly", "regress", "sanity",  "smoke",
    "edge",    "core",    "access",  "uplink",  "standby", "active",  "legacy",  "staging"};

constexpr std::array<std::string_view, 10> kSyllables = {"ka", "lo", "mi", "ne", "ru",
                                                         "ta", "vo", "zi", "pe", "su"};

constexpr std::string_view kTimestamp = "2024-01-01T00:00:00Z";

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

bool coin(std::mt19937_64& rng, double p) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 < p;
}

std::string module_name(std::size_t m) {
  if (m < kModuleNames.size()) return std::string(kModuleNames[m]);
  return "mod" + std::to_string(m);
}

std::string topic_name(std::size_t c) {
  if (c < kTopics.size()) return std::string(kTopics[c]);
  return std::string(kTopics[c % kTopics.size()]) + std::to_string(c / kTopics.size());
}

std::string padded(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06zu", prefix, n);
  return buf;
}

// Renders a python-like test that invokes exactly `calls` (in order), mixed
// with comments, strings, keyword parentheses and bare references that must
// not count as calls.
std::string render_script(const std::string& module, const std::string& test_name,
                          const std::vector<std::string>& calls, std::mt19937_64& rng) {
  std::string s;
  if (coin(rng, 0.5)) {
    s += "\"\"\"Scenario " + test_name + ".\n\nUses fixture_helper() from the harness.\n\"\"\"\n";
  }
  s += "import " + module + "\n\n\n";
  s += "def " + test_name + "():\n";
  if (calls.empty()) {
    s += "    pass\n";
    return s;
  }
  s += "    dut = " + calls[0] + "(\"dut1\")\n";
  for (std::size_t i = 1; i < calls.size(); ++i) {
    switch (pick(rng, 6)) {
      case 0:
        s += "    if not " + calls[i] + "(dut):\n        return\n";
        break;
      case 1:
        if (i + 1 < calls.size()) {
          s += "    " + calls[i] + "(dut, " + calls[i + 1] + "(timeout=5))\n";
          ++i;
        } else {
          s += "    " + calls[i] + "(dut)\n";
        }
        break;
      case 2:
        s += "    # retry with " + module + ".phantom_retry(dut) when flaky\n";
        s += "    " + calls[i] + "(dut)\n";
        break;
      case 3:
        s += "    note = 'expects " + module + ".string_only(dut) to pass'\n";
        s += "    " + calls[i] + "(dut, note)\n";
        break;
      case 4:
        s += "    handler = " + calls[i] + "\n";
        s += "    " + calls[i] + "(dut)  # handler(dut) is equivalent\n";
        break;
      default:
        s += "    " + calls[i] + "(dut)\n";
        break;
    }
  }
  s += "    assert (dut is not None)\n";
  return s;
}

CorpusCase make_module_case(const SyntheticCorpusSpec& spec, const std::string& module,
                            const std::vector<std::string>& vocab, std::size_t module_index,
                            std::string id, std::size_t step, std::mt19937_64& rng) {
  const std::size_t clusters = std::max<std::size_t>(1, vocab.size() / 3);
  const std::size_t cluster = pick(rng, clusters);

  std::vector<std::string> calls;
  for (std::size_t j = 0; j < std::min<std::size_t>(3, vocab.size()); ++j) {
    calls.push_back(vocab[(3 * cluster + j) % vocab.size()]);
  }
  if (vocab.size() > 3 && coin(rng, 0.5)) {
    const std::string& extra = vocab[pick(rng, vocab.size())];
    if (std::find(calls.begin(), calls.end(), extra) == calls.end()) calls.push_back(extra);
  }
  std::shuffle(calls.begin(), calls.end(), rng);

  const std::string topic = topic_name(cluster);
  std::string intent =
      std::string(kIntentVerbs[pick(rng, kIntentVerbs.size())]) + " " + module + " " + topic;
  for (auto phrase : kPhrases) {
    if (coin(rng, spec.paraphrase_noise)) intent += " " + std::string(phrase);
  }

  CorpusCase out;
  out.item.id = std::move(id);
  out.item.intent = std::move(intent);
  out.item.script =
      render_script(module, "test_" + module + "_" + topic + "_" + out.item.id, calls, rng);
  out.item.created_at = std::string(kTimestamp);
  out.item.source = CaseSource::seed;
  for (const auto& c : calls) out.calls.insert(c);
  out.module = module_index;
  out.cluster = cluster;
  out.step = step;
  return out;
}

}  // namespace

SyntheticCorpus generate_corpus(const SyntheticCorpusSpec& spec) {
  if (spec.modules == 0) throw InvalidArgument("corpus needs at least one module");
  if (spec.function_vocabulary_size == 0 ||
      spec.function_vocabulary_size > kVerbs.size() * kNouns.size()) {
    throw InvalidArgument("function_vocabulary_size must lie in [1, 100]");
  }
  if (spec.paraphrase_noise < 0.0 || spec.paraphrase_noise > 1.0) {
    throw InvalidArgument("paraphrase_noise must lie in [0, 1]");
  }

  std::mt19937_64 rng(spec.seed);
  SyntheticCorpus corpus;
  std::vector<std::vector<std::string>> vocab(spec.modules);
  for (std::size_t m = 0; m < spec.modules; ++m) {
    corpus.module_names.push_back(module_name(m));
    std::vector<std::string> all;
    for (auto v : kVerbs) {
      for (auto n : kNouns) all.push_back(corpus.module_names[m] + "." + std::string(v) + "_" + std::string(n));
    }
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(spec.function_vocabulary_size);
    vocab[m] = std::move(all);
  }

  std::vector<std::size_t> available_from(spec.modules, 0);
  for (const auto& d : spec.drift_schedule) {
    if (d.module >= spec.modules) throw InvalidArgument("drift event names an unknown module");
    available_from[d.module] = d.step;
  }

  std::vector<std::size_t> remaining(spec.modules, spec.cases_per_module);
  const std::size_t total = spec.modules * spec.cases_per_module;
  for (std::size_t step = 0; step < total; ++step) {
    std::size_t weight = 0;
    for (std::size_t m = 0; m < spec.modules; ++m) {
      if (available_from[m] <= step) weight += remaining[m];
    }
    if (weight == 0) {
      throw InvalidArgument("drift schedule leaves no available case at step " +
                            std::to_string(step));
    }
    std::size_t r = pick(rng, weight);
    std::size_t chosen = 0;
    for (std::size_t m = 0; m < spec.modules; ++m) {
      if (available_from[m] > step) continue;
      if (r < remaining[m]) {
        chosen = m;
        break;
      }
      r -= remaining[m];
    }
    --remaining[chosen];
    corpus.timeline.push_back(make_module_case(spec, corpus.module_names[chosen], vocab[chosen],
                                               chosen, padded('t', step), step, rng));
  }

  std::size_t test_index = 0;
  for (std::size_t m = 0; m < spec.modules; ++m) {
    for (std::size_t i = 0; i < spec.test_cases_per_module; ++i) {
      corpus.test.push_back(make_module_case(spec, corpus.module_names[m], vocab[m], m,
                                             padded('x', test_index++), total, rng));
    }
  }
  return corpus;
}

SyntheticCorpus generate_paraphrase_corpus(const ParaphraseCorpusSpec& spec) {
  if (spec.clusters == 0 || spec.cases_per_cluster == 0 || spec.calls_per_cluster == 0) {
    throw InvalidArgument("paraphrase corpus needs clusters, cases and calls");
  }
  if (spec.filler_vocabulary > kFillers.size() || spec.filler_words > spec.filler_vocabulary) {
    throw InvalidArgument("filler_words must not exceed filler_vocabulary (max 24)");
  }

  std::mt19937_64 rng(spec.seed);
  SyntheticCorpus corpus;
  std::vector<std::string> keywords;
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    // Distinct pseudo-words: the digits of c pick the trailing syllables.
    std::string word(kSyllables[pick(rng, kSyllables.size())]);
    std::size_t n = c;
    do {
      word += kSyllables[n % kSyllables.size()];
      n /= kSyllables.size();
    } while (n > 0);
    word += "x";
    keywords.push_back(word);
    corpus.module_names.push_back(word + "_api");
  }

  auto make = [&](std::size_t cluster, std::string id, std::size_t step) {
    std::vector<std::size_t> fillers(spec.filler_vocabulary);
    std::iota(fillers.begin(), fillers.end(), std::size_t{0});
    std::shuffle(fillers.begin(), fillers.end(), rng);
    std::vector<std::string> words{keywords[cluster]};
    for (std::size_t i = 0; i < spec.filler_words; ++i) words.emplace_back(kFillers[fillers[i]]);
    std::shuffle(words.begin(), words.end(), rng);

    CorpusCase out;
    out.item.id = std::move(id);
    for (const auto& w : words) out.item.intent += (out.item.intent.empty() ? "" : " ") + w;
    std::vector<std::string> calls;
    for (std::size_t j = 0; j < spec.calls_per_cluster; ++j) {
      calls.push_back(corpus.module_names[cluster] + ".step_" + std::to_string(j));
    }
    out.item.script = render_script(corpus.module_names[cluster],
                                    "test_" + keywords[cluster] + "_" + out.item.id, calls, rng);
    out.item.created_at = std::string(kTimestamp);
    for (const auto& c : calls) out.calls.insert(c);
    out.module = cluster;
    out.cluster = cluster;
    out.step = step;
    return out;
  };

  std::size_t step = 0;
  for (std::size_t i = 0; i < spec.cases_per_cluster; ++i) {
    for (std::size_t c = 0; c < spec.clusters; ++c) {
      corpus.timeline.push_back(make(c, padded('p', step), step));
      ++step;
    }
  }
  std::size_t test_index = 0;
  for (std::size_t i = 0; i < spec.test_cases_per_cluster; ++i) {
    for (std::size_t c = 0; c < spec.clusters; ++c) {
      corpus.test.push_back(make(c, padded('q', test_index++), step));
    }
  }
  return corpus;
}

std::vector<Case> cases_of(std::span<const CorpusCase> cases) {
  std::vector<Case> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(c.item);
  return out;
}

CaseBank bank_of(std::span<const CorpusCase> cases) {
  CaseBank bank;
  for (const auto& c : cases) {
    bank.retain(c.item.intent, c.item.script,
                CaseBank::RetainOptions{std::nullopt, c.item.source, c.item.id});
  }
  return bank;
}

void write_cases(const std::filesystem::path& path, std::span<const Case> cases) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageFailure("cannot write '" + path.string() + "'");
  for (const auto& c : cases) out << to_json(c).dump() << '\n';
  if (!out) throw StorageFailure("write to '" + path.string() + "' failed");
}

std::vector<Case> read_cases(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageFailure("cannot open '" + path.string() + "'");
  std::vector<Case> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(case_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw MalformedRecord(line_no, e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------- reports

namespace {

json score_json(const ScriptScore& s) {
  return json{{"cs", s.code_similarity},
              {"fp", s.function_precision},
              {"fr", s.function_recall},
              {"ff1", s.function_f1}};
}

}  // namespace

json to_json(const EvaluationReport& report) {
  json samples = json::array();
  for (const auto& s : report.samples) {
    json j{{"case_id", s.case_id}, {"retrieved_ids", s.retrieved_ids}, {"repetitive", s.repetitive}};
    j["score"] = s.score ? score_json(*s.score) : json(nullptr);
    if (!s.error.empty()) j["error"] = s.error;
    samples.push_back(std::move(j));
  }
  return json{{"schema_version", kReportSchemaVersion},
              {"split", report.split},
              {"generator_id", report.generator_id},
              {"m", report.m},
              {"sample_count", report.samples.size()},
              {"failures", report.failures},
              {"aggregates_defined", report.aggregates_defined},
              {"aggregates", report.aggregates_defined ? score_json(report.aggregates) : json(nullptr)},
              {"repetitive_generation_rate", report.repetitive_generation_rate},
              {"samples", std::move(samples)}};
}

namespace {

GenerationRecord answer(const CaseBankView& view, const Case& query, const Retriever& retriever,
                        Generator& generator, std::size_t m, const ReuseOptions& reuse) {
  RetrievalResult top;
  if (!view.empty()) top = retriever.retrieve_top_k(view, query.intent, m);
  GenerationRequest request = make_request(query.intent, top, view, m, DecodingConfig{0.0, 1024});
  request.reference_script = query.script;
  return generate(std::move(request), generator, reuse);
}

}  // namespace

EvaluationReport evaluate_offline(const CaseBankView& bank, std::span<const Case> test,
                                  const Retriever& retriever, Generator& generator,
                                  const EvaluationOptions& options) {
  if (options.m < 1) throw InvalidArgument("M must be >= 1");
  EvaluationReport report;
  report.split = options.split;
  report.generator_id = generator.id();
  report.m = options.m;
  report.samples.resize(test.size());

  auto run_one = [&](std::size_t i) {
    SampleResult& s = report.samples[i];
    s.case_id = test[i].id;
    try {
      const auto record = answer(bank, test[i], retriever, generator, options.m, options.reuse);
      for (const auto& r : record.request.retrieved) s.retrieved_ids.push_back(r.item.id);
      s.score = score_pair(record.draft, test[i].script);
      s.repetitive = detect_repetition_default(record.draft).is_repetitive;
    } catch (const std::exception& e) {
      s.error = e.what();
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, test.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < test.size(); ++i) run_one(i);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < test.size(); i += threads) run_one(i);
      });
    }
  }

  std::size_t scored = 0;
  std::size_t repetitive = 0;
  for (const auto& s : report.samples) {
    if (!s.score) {
      ++report.failures;
      continue;
    }
    ++scored;
    repetitive += s.repetitive ? 1 : 0;
    report.aggregates.code_similarity += s.score->code_similarity;
    report.aggregates.function_precision += s.score->function_precision;
    report.aggregates.function_recall += s.score->function_recall;
    report.aggregates.function_f1 += s.score->function_f1;
  }
  if (scored > 0) {
    const double n = static_cast<double>(scored);
    report.aggregates_defined = true;
    report.aggregates.code_similarity /= n;
    report.aggregates.function_precision /= n;
    report.aggregates.function_recall /= n;
    report.aggregates.function_f1 /= n;
    report.repetitive_generation_rate = static_cast<double>(repetitive) / n;
  } else {
    report.aggregates = ScriptScore{};
  }
  return report;
}

// ---------------------------------------------------------------- online

json to_json(const OnlinePoint& p) {
  return json{{"step", p.step},
              {"case_id", p.case_id},
              {"ff1", p.ff1},
              {"cumulative_ff1", p.cumulative_ff1},
              {"windowed_ff1", p.windowed_ff1},
              {"bank_revision", p.bank_revision},
              {"failed", p.failed}};
}

std::vector<OnlinePoint> simulate_online(CaseBank& bank, std::span<const Case> stream,
                                         const Retriever& retriever, Generator& generator,
                                         const OnlineOptions& options) {
  if (options.m < 1) throw InvalidArgument("M must be >= 1");
  if (options.window < 1) throw InvalidArgument("window must be >= 1");
  std::vector<OnlinePoint> series;
  series.reserve(stream.size());
  double total = 0.0;
  double window_sum = 0.0;

  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Case& query = stream[i];
    OnlinePoint p;
    p.step = i + 1;
    p.case_id = query.id;
    try {
      const auto record =
          answer(bank.snapshot(), query, retriever, generator, options.m, options.reuse);
      p.ff1 = function_f1(extract_functions(record.draft), extract_functions(query.script));
    } catch (const std::exception&) {
      p.failed = true;
    }
    // Revise: the ground-truth script stands in for the engineer's edit.
    if (options.retain_enabled) {
      CaseBank::RetainOptions retain{std::nullopt, CaseSource::revised, std::nullopt};
      if (!bank.contains(query.id)) retain.id = query.id;
      bank.retain(query.intent, query.script, retain);
    }
    total += p.ff1;
    window_sum += p.ff1;
    if (i >= options.window) window_sum -= series[i - options.window].ff1;
    p.cumulative_ff1 = total / static_cast<double>(i + 1);
    p.windowed_ff1 = window_sum / static_cast<double>(std::min(i + 1, options.window));
    p.bank_revision = bank.revision();
    series.push_back(std::move(p));
  }
  return series;
}

std::vector<double> improvement_series(std::span<const OnlinePoint> series,
                                       std::span<const OnlinePoint> baseline) {
  if (series.size() != baseline.size()) {
    throw InvalidArgument("improvement series needs equally long inputs");
  }
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    out[i] = series[i].cumulative_ff1 - baseline[i].cumulative_ff1;
  }
  return out;
}

}  // namespace cbr
