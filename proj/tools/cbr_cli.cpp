// cbr: command-line front end for the case-based test-script engine.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbr/case_bank.hpp"
#include "cbr/errors.hpp"
#include "cbr/evaluation.hpp"
#include "cbr/metrics.hpp"
#include "cbr/retrieval.hpp"
#include "cbr/retrieval_finetune.hpp"
#include "cbr/reuse.hpp"
#include "cbr/rlft.hpp"
#include "cbr/script_analysis.hpp"
#include "cbr/service.hpp"

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cbr::StorageFailure("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw cbr::StorageFailure("cannot write '" + path + "'");
  out << text;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Common {
  std::string config_path;

  cbr::ServiceConfig load() const {
    cbr::ConfigMap map;
    if (!config_path.empty()) map = cbr::load_config_file(config_path);
    cbr::apply_env_overrides(map, [](const char* name) { return std::getenv(name); });
    return cbr::service_config_from(map);
  }
};

std::shared_ptr<cbr::Generator> generator_named(const std::string& name,
                                                const cbr::ServiceConfig& config,
                                                std::uint64_t seed) {
  if (name == "copy-top") return std::make_shared<cbr::CopyTopCaseGenerator>();
  if (name == "oracle") return std::make_shared<cbr::OracleGenerator>();
  if (name == "noisy") return std::make_shared<cbr::NoisyGenerator>(0.8, 0.2, seed);
  if (name == "llm") return std::make_shared<cbr::LlmGenerator>(config.llm);
  throw cbr::InvalidArgument("unknown generator '" + name + "'");
}

cbr::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Case-based reasoning engine for functional test-script generation"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "flat key = value config file");

  // analyze
  std::string analyze_script;
  auto* analyze = app.add_subcommand("analyze", "extract invoked functions and check repetition");
  analyze->add_option("script", analyze_script, "script file")->required();

  // score
  std::string score_generated, score_reference;
  auto* score = app.add_subcommand("score", "score a generated script against a reference");
  score->add_option("--generated", score_generated)->required();
  score->add_option("--reference", score_reference)->required();

  // generate-corpus
  cbr::SyntheticCorpusSpec corpus_spec;
  std::vector<std::string> drift;
  std::string corpus_bank_out = "bank.jsonl", corpus_test_out = "test.jsonl";
  bool paraphrase = false;
  auto* gen_corpus = app.add_subcommand("generate-corpus", "write a synthetic bank and test split");
  gen_corpus->add_option("--modules", corpus_spec.modules);
  gen_corpus->add_option("--cases-per-module", corpus_spec.cases_per_module);
  gen_corpus->add_option("--test-cases-per-module", corpus_spec.test_cases_per_module);
  gen_corpus->add_option("--vocabulary", corpus_spec.function_vocabulary_size,
                         "functions per module");
  gen_corpus->add_option("--noise", corpus_spec.paraphrase_noise);
  gen_corpus->add_option("--drift", drift, "STEP:MODULE, repeatable");
  gen_corpus->add_option("--seed", corpus_spec.seed);
  gen_corpus->add_flag("--paraphrase", paraphrase, "adversarial paraphrase-cluster corpus");
  gen_corpus->add_option("--bank-out", corpus_bank_out);
  gen_corpus->add_option("--test-out", corpus_test_out);

  // mine-labels
  std::string mine_bank, mine_out = "triplets.jsonl";
  std::size_t mine_k = cbr::kDefaultMiningK, mine_threads = 1;
  auto* mine = app.add_subcommand("mine-labels", "FF1-reranked pseudo-labels for adapter training");
  mine->add_option("--bank", mine_bank)->required();
  mine->add_option("--k", mine_k);
  mine->add_option("--threads", mine_threads);
  mine->add_option("--out", mine_out);

  // train-adapter
  std::string train_bank, train_triplets, train_out = "adapter.json", train_loss_out;
  cbr::AdapterTrainingConfig train_config;
  bool train_tau_set = false;
  auto* train = app.add_subcommand("train-adapter", "InfoNCE training of the linear adapter");
  train->add_option("--bank", train_bank)->required();
  train->add_option("--triplets", train_triplets)->required();
  train->add_option("--epochs", train_config.epochs);
  train->add_option("--learning-rate", train_config.learning_rate);
  train->add_option("--batch-size", train_config.batch_size);
  train->add_option("--seed", train_config.seed);
  train->add_option("--tau", train_config.tau)->each([&](const std::string&) { train_tau_set = true; });
  train->add_flag("!--no-in-batch-negatives", train_config.in_batch_negatives);
  train->add_option("--out", train_out);
  train->add_option("--loss-out", train_loss_out, "loss curve, one value per line");

  // export-sft
  std::string sft_bank, sft_out = "sft.jsonl";
  std::size_t sft_m = 0;
  auto* sft = app.add_subcommand("export-sft", "leave-one-out prompt/completion pairs");
  sft->add_option("--bank", sft_bank)->required();
  sft->add_option("--m", sft_m);
  sft->add_option("--out", sft_out);

  // rlft-toy
  std::string rl_algo = "reinforce", rl_pool = "fa,fb,fc,fd", rl_reference = "fa,fb", rl_out;
  cbr::ToyTrainingConfig rl_config;
  rl_config.learning_rate = 0.05;
  rl_config.steps = 2000;
  bool rl_beta_set = false;
  auto* rl = app.add_subcommand("rlft-toy", "RL finetuning on the enumerable toy policy");
  rl->add_option("--algo", rl_algo)
      ->check(CLI::IsMember({"reinforce", "online_dpo", "remax", "rloo", "grpo"}));
  rl->add_option("--beta", rl_config.beta)->each([&](const std::string&) { rl_beta_set = true; });
  rl->add_option("--steps", rl_config.steps);
  rl->add_option("--seed", rl_config.seed);
  rl->add_option("--learning-rate", rl_config.learning_rate);
  rl->add_option("--max-length", rl_config.max_length);
  rl->add_option("--group-size", rl_config.group_size);
  rl->add_option("--clip-epsilon", rl_config.clip_epsilon);
  rl->add_option("--pool", rl_pool, "comma-separated function vocabulary");
  rl->add_option("--reference", rl_reference, "comma-separated reference call set");
  rl->add_option("--out", rl_out, "curve JSONL (default stdout)");

  // evaluate
  std::string eval_bank, eval_split, eval_generator = "copy-top", eval_out;
  std::size_t eval_m = 0, eval_threads = 1;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("evaluate", "offline evaluation against a held-out split");
  eval->add_option("--bank", eval_bank)->required();
  eval->add_option("--split", eval_split)->required();
  eval->add_option("--generator", eval_generator)
      ->check(CLI::IsMember({"copy-top", "oracle", "noisy", "llm"}));
  eval->add_option("--m", eval_m);
  eval->add_option("--threads", eval_threads);
  eval->add_option("--seed", eval_seed, "noisy generator seed");
  eval->add_option("--out", eval_out);

  // simulate-online
  std::string online_bank, online_stream, online_generator = "copy-top", online_out;
  std::string online_retain = "true";
  std::size_t online_m = 0, online_window = 50;
  auto* online = app.add_subcommand("simulate-online", "sequential 4R loop over a request stream");
  online->add_option("--bank", online_bank)->required();
  online->add_option("--stream", online_stream)->required();
  online->add_option("--retain", online_retain)->check(CLI::IsMember({"true", "false"}));
  online->add_option("--generator", online_generator)
      ->check(CLI::IsMember({"copy-top", "oracle", "noisy", "llm"}));
  online->add_option("--m", online_m);
  online->add_option("--window", online_window);
  online->add_option("--out", online_out);

  // serve
  std::string serve_bank, serve_journal, serve_static, serve_host;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve", "run the HTTP review service");
  serve->add_option("--bank", serve_bank);
  serve->add_option("--journal", serve_journal);
  serve->add_option("--static", serve_static);
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);

  CLI11_PARSE(app, argc, argv);

  try {
    const cbr::ServiceConfig config = common.load();
    const std::size_t m_default = config.retrieval_m;

    if (*analyze) {
      const std::string text = read_file(analyze_script);
      const auto result = cbr::extract_functions_with_diagnostics(text);
      const auto rep = cbr::detect_repetition_default(text);
      json calls = json::array();
      for (const auto& c : result.calls) calls.push_back(c);
      std::cout << json{{"calls", calls},
                        {"skipped_regions", result.skipped_regions},
                        {"repetition",
                         {{"is_repetitive", rep.is_repetitive},
                          {"window_lines", rep.window_lines},
                          {"repeat_count", rep.repeat_count},
                          {"repeated_window", rep.repeated_window}}}}
                       .dump(2)
                << '\n';
    } else if (*score) {
      const auto s = cbr::score_pair(read_file(score_generated), read_file(score_reference));
      std::cout << json{{"cs", s.code_similarity},
                        {"fp", s.function_precision},
                        {"fr", s.function_recall},
                        {"ff1", s.function_f1}}
                       .dump(2)
                << '\n';
    } else if (*gen_corpus) {
      for (const auto& d : drift) {
        const auto colon = d.find(':');
        if (colon == std::string::npos) throw cbr::InvalidArgument("--drift expects STEP:MODULE");
        corpus_spec.drift_schedule.push_back(
            {std::stoul(d.substr(0, colon)), std::stoul(d.substr(colon + 1))});
      }
      cbr::SyntheticCorpus corpus;
      if (paraphrase) {
        cbr::ParaphraseCorpusSpec ps;
        ps.seed = corpus_spec.seed;
        corpus = cbr::generate_paraphrase_corpus(ps);
      } else {
        corpus = cbr::generate_corpus(corpus_spec);
      }
      cbr::write_cases(corpus_bank_out, cbr::cases_of(corpus.timeline));
      cbr::write_cases(corpus_test_out, cbr::cases_of(corpus.test));
      std::cerr << corpus.timeline.size() << " bank cases -> " << corpus_bank_out << ", "
                << corpus.test.size() << " test cases -> " << corpus_test_out << '\n';
    } else if (*mine) {
      const auto bank = cbr::CaseBank::load(mine_bank);
      const auto retriever = cbr::make_retriever(config);
      const auto triplets = cbr::mine_labels(bank.snapshot(), *retriever, mine_k, mine_threads);
      cbr::write_triplets(mine_out, triplets);
      std::cerr << triplets.size() << " triplets -> " << mine_out << '\n';
    } else if (*train) {
      if (!train_tau_set) train_config.tau = config.infonce_tau;
      const auto bank = cbr::CaseBank::load(train_bank);
      auto retriever = cbr::make_retriever(config);
      const auto triplets = cbr::read_triplets(train_triplets);
      const auto result = cbr::train_adapter(
          triplets, cbr::make_base_embedding_lookup(bank.snapshot(), retriever->embeddings()),
          retriever->embeddings().dimension(), train_config);
      write_text(train_out, result.adapter.to_json().dump() + "\n");
      if (!train_loss_out.empty()) {
        std::string lines;
        for (double l : result.loss_curve) lines += std::to_string(l) + "\n";
        write_text(train_loss_out, lines);
      }
      std::cerr << result.loss_curve.size() << " steps";
      if (!result.loss_curve.empty()) {
        std::cerr << ", loss " << result.loss_curve.front() << " -> " << result.loss_curve.back();
      }
      std::cerr << ", adapter -> " << train_out << '\n';
    } else if (*sft) {
      const auto bank = cbr::CaseBank::load(sft_bank);
      const auto retriever = cbr::make_retriever(config);
      cbr::export_sft_dataset(bank.snapshot(), *retriever, sft_m ? sft_m : m_default, sft_out);
    } else if (*rl) {
      if (!rl_beta_set) rl_config.beta = config.rl_beta;
      rl_config.algorithm = cbr::rl_algorithm_from_string(rl_algo);
      cbr::FunctionCallSet reference;
      for (const auto& f : split_csv(rl_reference)) reference.insert(f);
      const std::vector<cbr::ToyTask> tasks{{split_csv(rl_pool), reference}};
      const auto result = cbr::train_toy(tasks, rl_config);
      std::string lines;
      for (const auto& p : result.curve) lines += cbr::to_json(p).dump() + "\n";
      write_text(rl_out, lines);
      if (!result.curve.empty()) {
        std::cerr << "final expected FF1 " << result.curve.back().expected_reward << ", KL "
                  << result.curve.back().kl << '\n';
      }
    } else if (*eval) {
      const auto bank = cbr::CaseBank::load(eval_bank);
      const auto test = cbr::read_cases(eval_split);
      const auto retriever = cbr::make_retriever(config);
      auto generator = generator_named(eval_generator, config, eval_seed);
      cbr::EvaluationOptions options;
      options.m = eval_m ? eval_m : m_default;
      options.split = eval_split;
      options.threads = eval_threads;
      options.reuse.prompt_budget_chars = config.prompt_budget_chars;
      const auto report =
          cbr::evaluate_offline(bank.snapshot(), test, *retriever, *generator, options);
      write_text(eval_out, cbr::to_json(report).dump(2) + "\n");
      if (report.aggregates_defined) {
        std::cerr << "FF1 " << report.aggregates.function_f1 << " over "
                  << report.samples.size() - report.failures << " samples\n";
      }
    } else if (*online) {
      auto bank = cbr::CaseBank::load(online_bank);
      const auto stream = cbr::read_cases(online_stream);
      const auto retriever = cbr::make_retriever(config);
      auto generator = generator_named(online_generator, config, 0);
      cbr::OnlineOptions options;
      options.m = online_m ? online_m : m_default;
      options.retain_enabled = online_retain == "true";
      options.window = online_window;
      options.reuse.prompt_budget_chars = config.prompt_budget_chars;
      const auto series = cbr::simulate_online(bank, stream, *retriever, *generator, options);
      std::string lines;
      for (const auto& p : series) lines += cbr::to_json(p).dump() + "\n";
      write_text(online_out, lines);
      if (!series.empty()) std::cerr << "final cumulative FF1 " << series.back().cumulative_ff1 << '\n';
    } else if (*serve) {
      const std::string bank_path = serve_bank.empty() ? config.bank_path : serve_bank;
      const std::string journal_path = serve_journal.empty() ? config.journal_path : serve_journal;
      cbr::ServiceOptions options;
      options.m = config.retrieval_m;
      options.reuse.prompt_budget_chars = config.prompt_budget_chars;
      options.journal = journal_path;
      cbr::ReviewService service(cbr::CaseBank::open(bank_path), cbr::make_retriever(config),
                                 cbr::make_generator(config), options);
      cbr::HttpServerOptions http;
      http.host = serve_host.empty() ? config.server_host : serve_host;
      http.port = serve_port >= 0 ? serve_port : config.server_port;
      http.static_dir = serve_static.empty() ? config.static_dir : serve_static;
      cbr::HttpServer server(service, http);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << http.host << ":" << port << " (bank " << bank_path << ", "
                << service.bank().size() << " cases)\n";
      server.serve();
      g_server = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
