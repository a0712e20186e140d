#include <fcntl.h>
#include <netinet/in.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include "csp/index_io.hpp"
#include "support/fixture_corpus.hpp"

extern char** environ;

namespace csp {
namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Run run(const std::vector<std::string>& args, const testing::TempDir& scratch) {
  std::string cmd = quote(CSP_BIN);
  for (const auto& a : args) cmd += " " + quote(a);
  const auto err_path = scratch.path() / "stderr.txt";
  cmd += " 2>" + quote(err_path.string());
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  std::ifstream in(err_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    fx_ = new testing::Fixture(testing::make_fixture({.sketches_per_category = 40}));
    paths_ = new testing::FixturePaths(testing::write_fixture(*fx_, dir_->path()));
  }
  static void TearDownTestSuite() {
    delete paths_;
    delete fx_;
    delete dir_;
  }

  std::filesystem::path build(const std::string& name, std::vector<std::string> extra = {}) {
    const auto out = dir_->path() / name;
    std::vector<std::string> args = {"build-index", "--corpus", paths_->corpus.string(), "--embeddings",
                                     paths_->embeddings.string(), "--out", out.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = run(args, scratch_);
    EXPECT_EQ(r.status, 0) << r.err;
    return out;
  }

  std::filesystem::path sketch_file(const std::string& record) {
    const auto p = scratch_.path() / "sketch.ndjson";
    std::ofstream(p) << record << '\n';
    return p;
  }

  std::vector<std::string> artifact_args(const std::filesystem::path& index) const {
    return {"--index", index.string(), "--embeddings", paths_->embeddings.string(), "--corpus",
            paths_->corpus.string()};
  }

  testing::TempDir scratch_{"cli_scratch"};
  static testing::TempDir* dir_;
  static testing::Fixture* fx_;
  static testing::FixturePaths* paths_;
};
testing::TempDir* CliTest::dir_ = nullptr;
testing::Fixture* CliTest::fx_ = nullptr;
testing::FixturePaths* CliTest::paths_ = nullptr;

TEST_F(CliTest, BuildIndexIsByteIdentical) {
  const auto a = build("a.idx", {"--k", "4", "--seed", "5"});
  const auto b = build("b.idx", {"--k", "4", "--seed", "5"});
  EXPECT_EQ(read_bytes(a), read_bytes(b));
  EXPECT_NO_THROW((void)load_index(a));
}

TEST_F(CliTest, BuildIndexTooFewPoints) {
  const auto r = run({"build-index", "--corpus", paths_->corpus.string(), "--embeddings",
                      paths_->embeddings.string(), "--out", (scratch_.path() / "x.idx").string(), "--k", "10",
                      "--limit-per-category", "5"},
                     scratch_);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("TooFewPoints"), std::string::npos) << r.err;
}

TEST_F(CliTest, QueryJsonAndText) {
  const auto index = build("q.idx", {"--k", "4"});
  const auto sketch = sketch_file(R"({"word":"dog","drawing":[[[10,200,120,10],[10,30,220,10]]]})");
  auto args = artifact_args(index);
  args.insert(args.begin(), "query");
  args.insert(args.end(), {"--sketch", sketch.string(), "--label", "dog", "--novelty", "high", "--json"});
  const auto r = run(args, scratch_);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto reply = nlohmann::json::parse(r.out);
  EXPECT_NE(reply["target_label"], "dog");
  EXPECT_EQ(reply["novelty"], "high");

  args.pop_back();
  const auto text = run(args, scratch_);
  EXPECT_EQ(text.status, 0);
  EXPECT_NE(text.out.find("target"), std::string::npos);
}

TEST_F(CliTest, QueryUsageAndDegenerate) {
  const auto index = build("u.idx", {"--k", "4"});
  const auto dot = sketch_file(R"({"word":"dog","drawing":[[[9,9],[9,9]]]})");
  auto base = artifact_args(index);
  base.insert(base.begin(), "query");

  auto missing_label = base;
  missing_label.insert(missing_label.end(), {"--sketch", dot.string(), "--novelty", "low"});
  EXPECT_EQ(run(missing_label, scratch_).status, 64);

  auto bad_novelty = base;
  bad_novelty.insert(bad_novelty.end(), {"--sketch", dot.string(), "--label", "dog", "--novelty", "wild"});
  EXPECT_EQ(run(bad_novelty, scratch_).status, 64);

  auto degenerate = base;
  degenerate.insert(degenerate.end(), {"--sketch", dot.string(), "--label", "dog", "--novelty", "low"});
  EXPECT_EQ(run(degenerate, scratch_).status, 3);

  EXPECT_EQ(run({}, scratch_).status, 64);
  EXPECT_EQ(run({"--help"}, scratch_).status, 0);
}

TEST_F(CliTest, InspectAndElbow) {
  const auto index = build("i.idx", {"--k", "3"});
  const auto r = run({"inspect", "--index", index.string()}, scratch_);
  ASSERT_EQ(r.status, 0) << r.err;
  for (const auto& label : fx_->labels) EXPECT_NE(r.out.find(label), std::string::npos) << label;
  EXPECT_NE(r.out.find(index_version(load_index(index))), std::string::npos);

  const auto e = run({"inspect", "--index", index.string(), "--elbow", "lamp"}, scratch_);
  ASSERT_EQ(e.status, 0) << e.err;
  std::istringstream lines(e.out.substr(e.out.find("elbow lamp")));
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) {
    int k = 0;
    double w = 0;
    if (std::sscanf(line.c_str(), " %d %lf", &k, &w) == 2) ++rows;
  }
  EXPECT_EQ(rows, 15);
  EXPECT_EQ(run({"inspect", "--index", index.string(), "--elbow", "unicorn"}, scratch_).status, 2);
}

TEST_F(CliTest, CorruptOrMissingIndex) {
  const auto index = build("c.idx", {"--k", "3"});
  auto bytes = read_bytes(index);
  bytes[bytes.size() / 3] ^= 0x40;
  const auto bad = scratch_.path() / "bad.idx";
  std::ofstream(bad, std::ios::binary) << bytes;
  auto r = run({"inspect", "--index", bad.string()}, scratch_);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("CorruptIndex"), std::string::npos) << r.err;
  r = run({"inspect", "--index", (scratch_.path() / "none.idx").string()}, scratch_);
  EXPECT_EQ(r.status, 2);
}

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  socklen_t len = sizeof(addr);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), len);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

pid_t spawn(const std::vector<std::string>& args, const std::filesystem::path& err) {
  std::vector<std::string> full = {CSP_BIN};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : full) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 1, "/dev/null", O_WRONLY, 0);
  posix_spawn_file_actions_addopen(&actions, 2, err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  pid_t pid = -1;
  if (posix_spawn(&pid, CSP_BIN, &actions, nullptr, argv.data(), environ) != 0) pid = -1;
  posix_spawn_file_actions_destroy(&actions);
  return pid;
}

int wait_exit(pid_t pid, std::chrono::seconds limit) {
  const auto deadline = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < deadline) {
    int st = 0;
    if (::waitpid(pid, &st, WNOHANG) == pid) return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ::kill(pid, SIGKILL);
  ::waitpid(pid, nullptr, 0);
  return -2;
}

TEST_F(CliTest, ServeAnswersAndStopsOnSigterm) {
  const auto index = build("s.idx", {"--k", "3"});
  const int port = free_port();
  auto args = artifact_args(index);
  args.insert(args.begin(), "serve");
  args.insert(args.end(), {"--port", std::to_string(port)});
  const pid_t pid = spawn(args, scratch_.path() / "serve.err");
  ASSERT_GT(pid, 0);
  struct Reaper {
    pid_t pid;
    ~Reaper() {
      if (::waitpid(pid, nullptr, WNOHANG) == 0) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
      }
    }
  } reaper{pid};

  httplib::Client cli("127.0.0.1", port);
  bool ready = false;
  for (int i = 0; i < 250 && !ready; ++i) {
    if (auto res = cli.Get("/v1/categories"); res && res->status == 200) ready = true;
    else std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  ASSERT_TRUE(ready);
  const auto health = cli.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(nlohmann::json::parse(health->body)["index_version"], index_version(load_index(index)));

  ::kill(pid, SIGTERM);
  EXPECT_EQ(wait_exit(pid, std::chrono::seconds(10)), 0);
  const auto log = read_bytes(scratch_.path() / "serve.err");
  EXPECT_NE(log.find("\"path\":\"/healthz\""), std::string::npos) << log;
}

TEST_F(CliTest, ServeBadIndexExits) {
  auto args = artifact_args(scratch_.path() / "absent.idx");
  args.insert(args.begin(), "serve");
  args.insert(args.end(), {"--port", std::to_string(free_port())});
  const pid_t pid = spawn(args, scratch_.path() / "serve.err");
  ASSERT_GT(pid, 0);
  EXPECT_EQ(wait_exit(pid, std::chrono::seconds(10)), 2);
}

}  // namespace
}  // namespace csp
