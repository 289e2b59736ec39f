// Command-line entry points: gen, run, serve, export.
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"

#include "reweighter/dataset.hpp"
#include "reweighter/error.hpp"
#include "reweighter/experiment.hpp"
#include "reweighter/influence.hpp"
#include "reweighter/server.hpp"
#include "reweighter/session.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 1;

rw::ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive sample reweighting workbench"};
  app.require_subcommand(1);

  rw::DatasetGenConfig gen_cfg;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic noisy, imbalanced dataset");
  gen->add_option("--classes", gen_cfg.num_classes, "Number of classes")->capture_default_str();
  gen->add_option("--per-class", gen_cfg.per_class, "Training samples of the largest class")->capture_default_str();
  gen->add_option("--noise", gen_cfg.noise_ratio, "Training label noise ratio in [0, 1)")->capture_default_str();
  gen->add_option("--val-noise", gen_cfg.val_noise_ratio, "Validation label noise ratio in [0, 1)")
      ->capture_default_str();
  gen->add_option("--imbalance", gen_cfg.imbalance_factor, "Largest / smallest class size")->capture_default_str();
  gen->add_option("--val-per-class", gen_cfg.val_per_class, "Validation samples per class")->capture_default_str();
  gen->add_option("--test-per-class", gen_cfg.test_per_class, "Test samples per class")->capture_default_str();
  gen->add_option("--dim", gen_cfg.feature_dim, "Feature dimension")->capture_default_str();
  gen->add_option("--sep", gen_cfg.class_separation, "Distance between adjacent class means")->capture_default_str();
  gen->add_option("--seed", gen_cfg.seed, "Random seed")->capture_default_str();
  gen->add_option("-o,--output", gen_out, "Output dataset file")->required();

  std::string run_data, run_mode = "uniform";
  rw::ExperimentConfig run_cfg;
  auto* run = app.add_subcommand("run", "Train and evaluate; prints metrics JSON");
  run->add_option("--data", run_data, "Dataset file")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", run_mode, "uniform | reweight | improve")->capture_default_str();
  run->add_option("--seed", run_cfg.train.seed, "Training seed")->capture_default_str();
  run->add_option("--lr", run_cfg.train.learning_rate, "Learning rate")->capture_default_str();
  run->add_option("--epochs", run_cfg.train.epochs, "Training epochs")->capture_default_str();

  std::string serve_data, serve_session, serve_host = "127.0.0.1", serve_ui;
  int serve_port = 8080;
  std::uint64_t serve_seed = 0;
  auto* serve = app.add_subcommand("serve", "Serve a session over HTTP");
  serve->add_option("--data", serve_data, "Dataset file for a new session");
  serve->add_option("--session", serve_session, "Session file to resume");
  serve->add_option("--port", serve_port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--ui", serve_ui, "Directory served under /ui/");
  serve->add_option("--seed", serve_seed, "Training seed for a new session")->capture_default_str();

  std::string export_data, export_csv, export_sidecar;
  std::uint64_t export_seed = 0;
  auto* exp = app.add_subcommand("export", "Write the influence matrix as CSV plus a JSON sidecar");
  exp->add_option("--data", export_data, "Dataset file")->required()->check(CLI::ExistingFile);
  exp->add_option("--csv", export_csv, "Output CSV")->required();
  exp->add_option("--sidecar", export_sidecar, "Output sidecar (default: <csv>.json)");
  exp->add_option("--seed", export_seed, "Training seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) {
      if (!(gen_cfg.noise_ratio >= 0.0 && gen_cfg.noise_ratio < 1.0)) throw UsageError("--noise must be in [0, 1)");
      if (!(gen_cfg.val_noise_ratio >= 0.0 && gen_cfg.val_noise_ratio < 1.0))
        throw UsageError("--val-noise must be in [0, 1)");
      if (gen_cfg.num_classes < 2) throw UsageError("--classes must be >= 2");
      if (!(gen_cfg.imbalance_factor >= 1.0)) throw UsageError("--imbalance must be >= 1");
      rw::save_dataset(rw::generate(gen_cfg), gen_out);
      return 0;
    }
    if (*run) {
      rw::RunMode mode;
      try {
        mode = rw::run_mode_from_string(run_mode);
      } catch (const rw::Error& e) {
        throw UsageError(e.what());
      }
      const rw::Dataset ds = rw::load_dataset(run_data);
      std::cout << rw::metrics_to_json_text(rw::run_experiment(ds, mode, run_cfg)) << '\n';
      return 0;
    }
    if (*serve) {
      if (serve_data.empty() == serve_session.empty()) throw UsageError("give exactly one of --data or --session");
      std::unique_ptr<rw::Session> session;
      if (!serve_session.empty()) {
        session = std::make_unique<rw::Session>(rw::load_session(serve_session));
      } else {
        rw::SessionConfig cfg;
        cfg.train.seed = serve_seed;
        cfg.layout.seed = serve_seed;
        auto ds = std::make_shared<const rw::Dataset>(rw::load_dataset(serve_data));
        session = std::make_unique<rw::Session>(ds, cfg);
      }
      rw::ServerOptions options;
      options.host = serve_host;
      options.port = serve_port;
      options.ui_dir = serve_ui;
      rw::ApiServer server(std::move(session), options);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on http://%s:%d\n", serve_host.c_str(), port);
      std::fflush(stdout);
      server.listen();
      g_server = nullptr;
      return 0;
    }
    if (*exp) {
      const rw::Dataset ds = rw::load_dataset(export_data);
      rw::TrainConfig train;
      train.seed = export_seed;
      const rw::ModelState model = rw::train_model(ds, std::nullopt, train);
      const rw::BipartiteGraph graph = rw::build_influence(model, ds);
      rw::export_influence(graph, export_csv, export_sidecar.empty() ? export_csv + ".json" : export_sidecar);
      return 0;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const rw::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return 0;
}
