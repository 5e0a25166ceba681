// splits: command-line driver for the corpus-to-evaluation pipeline.
//
//   splits --config run.json ingest
//   splits --config run.json sample --n 42 --seed 7
//   splits --config run.json annotate-serve --port 8080

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <pthread.h>

#include "splits/pipeline.hpp"
#include "splits/seedset_service.hpp"

namespace {

using namespace splits;

json parse_override_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  return v.is_discarded() ? json(text) : v;
}

void apply_overrides(PipelineConfig& config, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::invalid_argument, "--set expects key=value, got " + s);
    apply_parameter(config, s.substr(0, eq), parse_override_value(s.substr(eq + 1)));
  }
}

int serve(CommandContext& ctx, const std::string& host, int port, const std::string& port_file,
          const std::string& token_env) {
  // Block termination signals before any thread starts; a dedicated thread
  // waits for them and stops the server.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  const RunLayout layout = ctx.layout();
  const auto store = load_run_store(layout);
  const auto index = build_user_set_index(store);
  SeedsetServiceOptions options;
  options.sample_posts = ctx.config.sample_posts;
  options.slate.per_measure = ctx.config.slate_size;
  options.slate.overlap = overlap_options(ctx.config);
  options.state_dir = layout.annotation_state();
  options.export_dir = layout.annotation_exports();
  if (!token_env.empty()) {
    const char* token = std::getenv(token_env.c_str());
    if (!token || !*token) throw Error(ErrorKind::invalid_argument, "environment variable " + token_env + " is not set");
    options.shared_token = token;
  }
  SeedsetService service(store, index, options);
  const int bound = service.bind(host, port);
  if (bound <= 0) throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
  if (!port_file.empty()) write_file(port_file, std::to_string(bound) + "\n");
  *ctx.log << "annotate-serve: listening on " << host << ":" << bound << "\n";

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.listen();
  // listen() may also return on its own; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  *ctx.log << "annotate-serve: stopped\n";
  return 0;
}

int model_status(const ModelRunStats& stats) { return stats.endpoint_unreachable() ? 3 : 0; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corpus-to-evaluation pipeline for group theorization benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string run_dir;
  std::vector<std::string> sets;
  unsigned threads = 0;
  unsigned in_flight = 0;
  app.add_option("-c,--config", config_path, "pipeline configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--run-dir", run_dir, "override the run directory");
  app.add_option("--set", sets, "override a parameter, key=value (value parsed as JSON when possible)");
  app.add_option("--threads", threads, "worker threads for local computation");
  app.add_option("--in-flight", in_flight, "concurrent model requests");

  auto* ingest = app.add_subcommand("ingest", "read raw posts, filter bots and the chattiest users");
  auto* similarity = app.add_subcommand("similarity", "all-pairs subreddit overlap statistics");
  auto* annotate = app.add_subcommand("annotate-serve", "serve the seed-set annotation API");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string port_file;
  std::string token_env;
  annotate->add_option("--host", host, "bind address");
  annotate->add_option("--port", port, "bind port, 0 for any free port");
  annotate->add_option("--port-file", port_file, "write the bound port here");
  annotate->add_option("--token-env", token_env, "environment variable holding a required bearer token");
  auto* groupness = app.add_subcommand("groupness", "score users against each demographic's seed set");
  auto* self_id = app.add_subcommand("self-id", "self-identification candidates, verification and curves");
  auto* topics = app.add_subcommand("topics", "BM25 topic splits with cross-group filtering");
  auto* sample = app.add_subcommand("sample", "build calibration/evaluation task instances");
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  sample->add_option("--n", n, "calibration set size (even)");
  sample->add_option("--seed", seed, "sampling seed");
  auto* theorize = app.add_subcommand("theorize", "generate a theory per instance with the theory model");
  auto* evaluate = app.add_subcommand("evaluate", "score theories with the classification model");
  auto* report = app.add_subcommand("report", "accuracy split reports");
  auto* sweep = app.add_subcommand("sweep", "accuracy as a function of calibration size");
  std::vector<std::size_t> n_values;
  std::optional<std::size_t> max_instances;
  sweep->add_option("--n-values", n_values, "calibration sizes to evaluate");
  sweep->add_option("--max-instances", max_instances, "evaluate only the first N instances");
  sweep->add_option("--seed", seed, "calibration resampling seed");
  auto* humanval = app.add_subcommand("humanval", "score human validation sheets");
  bool raw_sheet = false;
  bool tie_win = false;
  humanval->add_flag("--raw-sheet-scores", raw_sheet, "average raw sheet scores instead of win/loss");
  humanval->add_flag("--tie-win", tie_win, "count a zero sheet score as a win");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    CommandContext ctx;
    if (!config_path.empty()) ctx.config = load_config(config_path);
    if (!run_dir.empty()) ctx.config.run_dir = std::filesystem::absolute(run_dir);
    apply_overrides(ctx.config, sets);
    if (threads) ctx.config.threads = threads;
    if (in_flight) ctx.config.in_flight = in_flight;
    if (n) ctx.config.n = *n;
    if (seed) ctx.config.seed = *seed;
    if (!n_values.empty()) ctx.config.sweep_n = n_values;
    if (max_instances) ctx.config.sweep_max_instances = *max_instances;
    validate_config(ctx.config);

    if (ingest->parsed()) cmd_ingest(ctx);
    else if (similarity->parsed()) cmd_similarity(ctx);
    else if (annotate->parsed()) return serve(ctx, host, port, port_file, token_env);
    else if (groupness->parsed()) cmd_groupness(ctx);
    else if (self_id->parsed()) cmd_self_id(ctx);
    else if (topics->parsed()) cmd_topics(ctx);
    else if (sample->parsed()) cmd_sample(ctx);
    else if (theorize->parsed()) return model_status(cmd_theorize(ctx));
    else if (evaluate->parsed()) return model_status(cmd_evaluate(ctx));
    else if (report->parsed()) cmd_report(ctx);
    else if (sweep->parsed()) return model_status(cmd_sweep(ctx));
    else if (humanval->parsed()) cmd_humanval(ctx, {tie_win ? TieRule::win : TieRule::loss, raw_sheet});
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error (parse): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
