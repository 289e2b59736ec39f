#include <gtest/gtest.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "reweighter/dataset.hpp"
#include "reweighter/influence.hpp"
#include "reweighter/model.hpp"

extern char** environ;

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kCli = RW_CLI_PATH;

struct Result {
  int status = -1;
  std::string out;
};

Result run(const std::string& args) {
  Result r;
  FILE* p = popen((kCli + " " + args + " 2>/dev/null").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("rw_cli_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  fs::path dir;
};

TEST_F(CliTest, GenMissingOutputIsUsageError) { EXPECT_EQ(run("gen --classes 3").status, 2); }

TEST_F(CliTest, GenRejectsNoiseOfOne) {
  EXPECT_EQ(run("gen --noise 1.0 -o " + path("d.json")).status, 2);
  EXPECT_FALSE(fs::exists(path("d.json")));
}

TEST_F(CliTest, NoSubcommandIsUsageError) { EXPECT_EQ(run("").status, 2); }

TEST_F(CliTest, GenWritesLoadableDataset) {
  ASSERT_EQ(run("gen --classes 4 --per-class 200 --noise 0.3 --imbalance 10 --seed 42 -o " + path("d.json")).status, 0);
  const rw::Dataset ds = rw::load_dataset(path("d.json"));
  EXPECT_EQ(ds.num_classes(), 4);
  std::vector<std::size_t> counts(4, 0);
  std::size_t noisy = 0;
  for (rw::SampleId id : ds.train_ids()) {
    ++counts[static_cast<std::size_t>(*ds.at(id).true_label)];
    noisy += ds.at(id).mislabeled();
  }
  EXPECT_EQ(counts.front(), 200u);
  EXPECT_EQ(counts.front() / counts.back(), 10u);
  EXPECT_EQ(noisy, static_cast<std::size_t>(0.3 * static_cast<double>(ds.train_ids().size())));
}

TEST_F(CliTest, RunPrintsMetricsJson) {
  ASSERT_EQ(run("gen --classes 3 --per-class 40 --noise 0.2 --seed 1 -o " + path("d.json")).status, 0);
  const Result r = run("run --data " + path("d.json") + " --mode reweight --seed 3");
  ASSERT_EQ(r.status, 0);
  const json m = json::parse(r.out);
  EXPECT_EQ(m.at("mode"), "reweight");
  EXPECT_EQ(m.at("seed"), 3);
  EXPECT_EQ(m.at("per_class_accuracy").size(), 3u);
  EXPECT_TRUE(m.contains("noise_auc"));
}

TEST_F(CliTest, RunWithoutTrueLabelsOmitsAuc) {
  const rw::Dataset base = [] {
    rw::DatasetGenConfig c;
    c.num_classes = 3;
    c.per_class = 40;
    c.noise_ratio = 0.2;
    return rw::generate(c);
  }();
  std::vector<rw::Sample> samples = base.samples();
  for (rw::Sample& s : samples) s.true_label.reset();
  rw::save_dataset(rw::Dataset(3, base.feature_dim(), samples, base.splits()), path("unlabeled.json"));
  const Result r = run("run --data " + path("unlabeled.json") + " --mode improve");
  ASSERT_EQ(r.status, 0);
  EXPECT_FALSE(json::parse(r.out).contains("noise_auc"));
}

TEST_F(CliTest, RunUnknownModeIsUsageError) {
  ASSERT_EQ(run("gen --classes 2 --per-class 20 -o " + path("d.json")).status, 0);
  EXPECT_EQ(run("run --data " + path("d.json") + " --mode fsr").status, 2);
}

TEST_F(CliTest, RunCorruptDatasetIsRuntimeFailure) {
  std::ofstream(path("bad.json")) << "{\"format\": 1";
  EXPECT_EQ(run("run --data " + path("bad.json")).status, 1);
}

TEST_F(CliTest, ServeBadSessionIsRuntimeFailure) {
  std::ofstream(path("s.json")) << "not a session";
  EXPECT_EQ(run("serve --session " + path("s.json") + " --port 0").status, 1);
}

TEST_F(CliTest, ServeNeedsExactlyOneSource) {
  EXPECT_EQ(run("serve --port 0").status, 2);
  ASSERT_EQ(run("gen --classes 2 --per-class 20 -o " + path("d.json")).status, 0);
  std::ofstream(path("s.json")) << "{}";
  EXPECT_EQ(run("serve --data " + path("d.json") + " --session " + path("s.json")).status, 2);
}

TEST_F(CliTest, ExportMatchesInProcessGraph) {
  ASSERT_EQ(run("gen --classes 3 --per-class 30 --noise 0.2 --seed 5 -o " + path("d.json")).status, 0);
  ASSERT_EQ(run("export --data " + path("d.json") + " --csv " + path("g.csv") + " --seed 2").status, 0);
  ASSERT_TRUE(fs::exists(path("g.csv.json")));
  const rw::BipartiteGraph imported = rw::import_influence(path("g.csv"), path("g.csv.json"));

  const rw::Dataset ds = rw::load_dataset(path("d.json"));
  rw::TrainConfig cfg;
  cfg.seed = 2;
  const rw::BipartiteGraph expected = rw::build_influence(rw::train_model(ds, std::nullopt, cfg), ds);
  EXPECT_EQ(imported, expected);
}

TEST_F(CliTest, ServeAnswersHealth) {
  ASSERT_EQ(run("gen --classes 2 --per-class 20 --seed 1 -o " + path("d.json")).status, 0);
  int fds[2];
  ASSERT_EQ(::pipe(fds), 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  const std::string data = path("d.json");
  std::vector<std::string> args{kCli, "serve", "--data", data, "--port", "0"};
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  ASSERT_EQ(posix_spawn(&pid, kCli.c_str(), &actions, nullptr, argv.data(), environ), 0);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);

  std::string line;
  char c;
  while (::read(fds[0], &c, 1) == 1 && c != '\n') line += c;
  ::close(fds[0]);
  const std::string prefix = "listening on http://127.0.0.1:";
  ASSERT_EQ(line.rfind(prefix, 0), 0u) << line;
  const int port = std::stoi(line.substr(prefix.size()));

  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body), json({{"status", "ok"}}));

  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
}

}  // namespace
