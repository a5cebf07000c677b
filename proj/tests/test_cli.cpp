#include <doctest.h>

#include "polygonet/image.hpp"
#include "polygonet/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace polygonet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
Result run(const std::string& args, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / "polygonet_cli_test.log";
  const std::string cmd = env + " \"" POLYGONET_CLI "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(log);
  std::ostringstream s;
  s << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, s.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Two classes of 5 blobs each: wide and tall dark ellipses on a light ground.
fs::path make_folder(const fs::path& root) {
  Rng rng(3);
  for (int label = 0; label < 2; ++label) {
    const fs::path dir = root / (label ? "tall" : "wide");
    fs::create_directories(dir);
    for (int i = 0; i < 5; ++i) {
      Image img{40, 40, 1, std::vector<std::uint8_t>(1600)};
      const double a = label ? 6 + 3 * uniform01(rng) : 14 + 3 * uniform01(rng);
      const double b = label ? 14 + 3 * uniform01(rng) : 6 + 3 * uniform01(rng);
      for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) {
          const double u = (x - 19.5) / a, v = (y - 19.5) / b;
          img.pixels[static_cast<std::size_t>(y) * 40 + x] = u * u + v * v <= 1 ? 30 : 220;
        }
      const auto bytes = encode_png(img);
      std::ofstream(dir / ("img" + std::to_string(i) + ".png"), std::ios::binary)
          .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
  }
  return root;
}

struct Workspace {
  fs::path root = fs::temp_directory_path() / "polygonet_cli_ws";
  fs::path config = root / "run.ini";
  Workspace() {
    fs::remove_all(root);
    make_folder(root / "data");
    std::ofstream(config) << "# small run\n"
                          << "dataset-kind=folder\n"
                          << "folder=" << (root / "data").string() << '\n'
                          << "output=" << (root / "out").string() << '\n'
                          << "d-model=8\nheads=2\nchannels=8,8\nepochs=3\nbatch-size=4\nlr=1e-2\n"
                          << "val-fraction=0.2\nseed=5\n";
  }
  ~Workspace() { fs::remove_all(root); }
  std::string cfg() const { return "--config \"" + config.string() + "\""; }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").status == 2);
  const Result unknown = run("frobnicate");
  CHECK(unknown.status == 2);
  CHECK(unknown.output.find("frobnicate") != std::string::npos);
  CHECK(run("train --config /nonexistent/run.ini").status == 2);
  CHECK(run("train --no-such-flag").status == 2);
  const Result help = run("--help");
  CHECK(help.status == 0);
  for (const char* sub : {"preprocess", "train", "eval", "bench", "inspect"})
    CHECK(help.output.find(sub) != std::string::npos);
}

TEST_CASE("runtime errors exit with 1 and name the path") {
  const Result r = run("train --cache /nonexistent/points.jsonl --output " +
                       (fs::temp_directory_path() / "polygonet_cli_missing").string());
  CHECK(r.status == 1);
  CHECK(r.output.find("/nonexistent/points.jsonl") != std::string::npos);
  CHECK(r.output.find('\n') == r.output.size() - 1);  // one-line diagnostic
  fs::remove_all(fs::temp_directory_path() / "polygonet_cli_missing");
  const fs::path scratch = fs::temp_directory_path() / "polygonet_cli_bad_rep";
  CHECK(run("preprocess --representation squiggle --dataset-kind folder --folder /tmp --output " + scratch.string())
            .status == 1);
  fs::remove_all(scratch);
}

TEST_CASE("preprocess, train, eval, bench and inspect") {
  Workspace ws;
  const fs::path out = ws.root / "out";

  const Result pre = run("preprocess " + ws.cfg() + " --representation dominant-points");
  REQUIRE(pre.status == 0);
  CHECK(pre.output.find("processed 10 skipped 0") != std::string::npos);
  const std::string cache = slurp(out / "points.jsonl");
  CHECK(std::count(cache.begin(), cache.end(), '\n') <= 10);
  CHECK(std::count(cache.begin(), cache.end(), '\n') >= 1);
  CHECK(slurp(out / "effective-preprocess.ini").find("representation=\"dominant-points\"") != std::string::npos);

  // The flag beats the file's epochs=3.
  const Result tr = run("train " + ws.cfg() + " --epochs 2");
  REQUIRE(tr.status == 0);
  CHECK(slurp(out / "effective-train.ini").find("epochs=2") != std::string::npos);
  const std::string history = slurp(out / "history.csv");
  CHECK(std::count(history.begin(), history.end(), '\n') == 3);
  CHECK(fs::exists(out / "model.ckpt"));

  const Result ev = run("eval " + ws.cfg());
  REQUIRE(ev.status == 0);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  const auto metrics = nlohmann::json::parse(slurp(out / "eval.json"));
  CHECK(metrics.at("accuracy").get<double>() == summary.at("best_val_accuracy").get<double>());

  const Result bench = run("bench " + ws.cfg() + " --bench-representations contours-none,dominant-points --runs " +
                           out.string() + " --format csv");
  REQUIRE(bench.status == 0);
  const std::string timing = slurp(out / "timing.csv");
  CHECK(timing.rfind("dataset,pipeline,", 0) == 0);
  CHECK(std::count(timing.begin(), timing.end(), '\n') == 3);
  CHECK(slurp(out / "results.csv").find("dataset,dominant-points,") != std::string::npos);

  const Result ins = run("inspect " + ws.cfg() + " --count 3");
  REQUIRE(ins.status == 0);
  int svgs = 0;
  for (const auto& e : fs::directory_iterator(out / "inspect")) svgs += e.path().extension() == ".svg";
  CHECK(svgs == 3);
}

TEST_CASE("same config and seed give identical artifacts") {
  Workspace ws;
  std::string cache[2], ckpt[2];
  for (int i = 0; i < 2; ++i) {
    const std::string o = " --output \"" + (ws.root / ("o" + std::to_string(i))).string() + "\"";
    REQUIRE(run("preprocess " + ws.cfg() + o).status == 0);
    REQUIRE(run("train " + ws.cfg() + o).status == 0);
    cache[i] = slurp(ws.root / ("o" + std::to_string(i)) / "points.jsonl");
    ckpt[i] = slurp(ws.root / ("o" + std::to_string(i)) / "model.ckpt");
  }
  CHECK(cache[0] == cache[1]);
  CHECK(ckpt[0] == ckpt[1]);
  CHECK(!ckpt[0].empty());
}

TEST_CASE("output root from the environment") {
  Workspace ws;
  const fs::path env_root = ws.root / "from-env";
  const Result r = run("inspect --dataset-kind folder --folder \"" + (ws.root / "data").string() + "\" --count 1",
                       "POLYGONET_OUTPUT_ROOT=\"" + env_root.string() + "\"");
  REQUIRE(r.status == 0);
  CHECK(fs::exists(env_root / "inspect"));
  CHECK(fs::exists(env_root / "effective-inspect.ini"));
}
