#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kCli = TAGPRIME_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("tagprime_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int exit_code;
  std::string output;  // stdout + stderr
};

Result run(const TempDir& dir, const std::string& args) {
  std::string out_file = dir.file("cmd_output.txt");
  std::string cmd = std::string(kCli) + " --manifest " + dir.file("runs.jsonl") + " " +
                    args + " > " + out_file + " 2>&1";
  int rc = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WEXITSTATUS(rc), ss.str()};
}

json last_manifest(const TempDir& dir) {
  std::ifstream in(dir.file("runs.jsonl"));
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  REQUIRE_FALSE(last.empty());
  return json::parse(last);
}

void write_train_config(const TempDir& dir, const std::string& name, int case_id,
                        uint64_t seed, const std::string& extra = "") {
  std::ofstream cfg(dir.file(name));
  cfg << R"({"task":"event_argument","corpus":")" << dir.file("train.jsonl")
      << R"(","schema":")" << dir.file("schema.json") << R"(","checkpoint_out":")"
      << dir.file("model.ckpt") << R"(","case":)" << case_id << R"(,"epochs":4,)"
      << R"("warmup_epochs":1,"encoder_lr":0.001,"seed":)" << seed
      << R"(,"eval_corpus":")" << dir.file("train.jsonl") << "\"" << extra << "}";
}

}  // namespace

TEST_CASE("generate -> train -> eval -> predict pipeline") {
  TempDir dir;
  auto gen = run(dir, "generate --count 12 --out " + dir.file("train.jsonl") +
                          " --schema-out " + dir.file("schema.json"));
  CHECK(gen.exit_code == 0);
  CHECK(fs::exists(dir.file("train.jsonl")));
  CHECK(fs::exists(dir.file("schema.json")));

  write_train_config(dir, "cfg.json", 4, 1);
  auto tr = run(dir, "train --config " + dir.file("cfg.json"));
  CHECK(tr.exit_code == 0);
  CHECK(fs::exists(dir.file("model.ckpt")));
  json manifest = last_manifest(dir);
  CHECK(manifest["command"] == "train");
  CHECK(manifest.contains("metrics"));
  CHECK(manifest["seed"] == 1);

  auto ev = run(dir, "eval --checkpoint " + dir.file("model.ckpt") + " --corpus " +
                         dir.file("train.jsonl") + " --task event_argument --report " +
                         dir.file("report.json"));
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("ArgC") != std::string::npos);
  CHECK(fs::exists(dir.file("report.json")));

  auto pr = run(dir, "predict --checkpoint " + dir.file("model.ckpt") + " --corpus " +
                         dir.file("train.jsonl") + " --out " + dir.file("preds.jsonl"));
  CHECK(pr.exit_code == 0);
  std::ifstream preds(dir.file("preds.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(preds, line)) {
    json rec = json::parse(line);
    CHECK(rec.contains("id"));
    CHECK(rec.contains("spans"));
    CHECK(rec.contains("tags"));
    ++lines;
  }
  CHECK(lines == 12);
}

TEST_CASE("missing corpus path exits 2 and names the path") {
  TempDir dir;
  auto gen = run(dir, "generate --count 4 --out " + dir.file("train.jsonl") +
                          " --schema-out " + dir.file("schema.json"));
  REQUIRE(gen.exit_code == 0);
  std::ofstream cfg(dir.file("bad.json"));
  cfg << R"({"task":"event_argument","corpus":")" << dir.file("nope.jsonl")
      << R"(","schema":")" << dir.file("schema.json")
      << R"(","checkpoint_out":"x.ckpt"})";
  cfg.close();
  auto tr = run(dir, "train --config " + dir.file("bad.json"));
  CHECK(tr.exit_code == 2);
  CHECK(tr.output.find("nope.jsonl") != std::string::npos);
}

TEST_CASE("unknown config keys are hard errors") {
  TempDir dir;
  std::ofstream cfg(dir.file("typo.json"));
  cfg << R"({"task":"event_argument","corpus":"a","schema":"b","checkpoint_out":"c","epochz":3})";
  cfg.close();
  auto tr = run(dir, "train --config " + dir.file("typo.json"));
  CHECK(tr.exit_code == 2);
  CHECK(tr.output.find("epochz") != std::string::npos);
}

TEST_CASE("fixed seed reruns produce identical training losses") {
  TempDir dir;
  run(dir, "generate --count 10 --out " + dir.file("train.jsonl") + " --schema-out " +
               dir.file("schema.json"));
  write_train_config(dir, "cfg.json", 3, 9);
  REQUIRE(run(dir, "train --config " + dir.file("cfg.json")).exit_code == 0);
  json first = last_manifest(dir);
  REQUIRE(run(dir, "train --config " + dir.file("cfg.json")).exit_code == 0);
  json second = last_manifest(dir);
  CHECK(first["final_loss"] == second["final_loss"]);
  CHECK(first["metrics"] == second["metrics"]);
}

TEST_CASE("ablate refuses too few seeds or cases") {
  TempDir dir;
  run(dir, "generate --count 6 --out " + dir.file("train.jsonl") + " --schema-out " +
               dir.file("schema.json"));
  std::string common = "ablate --train " + dir.file("train.jsonl") + " --test " +
                       dir.file("train.jsonl") + " --schema " + dir.file("schema.json");
  auto one_seed = run(dir, common + " --cases 1 --cases 2 --seeds 1");
  CHECK(one_seed.exit_code == 2);
  CHECK(one_seed.output.find("seed") != std::string::npos);
  auto one_case = run(dir, common + " --cases 1 --seeds 3");
  CHECK(one_case.exit_code == 2);
  auto bad_case = run(dir, common + " --cases 1 --cases 11 --seeds 3");
  CHECK(bad_case.exit_code == 2);
}

TEST_CASE("ablate produces one row per case") {
  TempDir dir;
  run(dir, "generate --count 8 --out " + dir.file("train.jsonl") + " --schema-out " +
               dir.file("schema.json"));
  std::ofstream cfg(dir.file("abl_cfg.json"));
  cfg << R"({"task":"event_argument","corpus":"-","schema":"-","checkpoint_out":"-",)"
      << R"("epochs":2,"warmup_epochs":1,"encoder_lr":0.001})";
  cfg.close();
  auto abl = run(dir, "ablate --train " + dir.file("train.jsonl") + " --test " +
                          dir.file("train.jsonl") + " --schema " +
                          dir.file("schema.json") +
                          " --cases 1 --cases 4 --cases 7 --seeds 3 --config " +
                          dir.file("abl_cfg.json"));
  CHECK(abl.exit_code == 0);
  CHECK(abl.output.find("case 1:") != std::string::npos);
  CHECK(abl.output.find("case 4:") != std::string::npos);
  CHECK(abl.output.find("case 7:") != std::string::npos);
  CHECK(abl.output.find("ordering") != std::string::npos);
}

TEST_CASE("bench preconditions: repetitions, split range, rel_priming checkpoint") {
  TempDir dir;
  run(dir, "generate --count 8 --out " + dir.file("train.jsonl") + " --schema-out " +
               dir.file("schema.json"));

  write_train_config(dir, "cfg_plain.json", 4, 2);  // no relationship priming
  REQUIRE(run(dir, "train --config " + dir.file("cfg_plain.json")).exit_code == 0);
  std::string common = "bench --checkpoint " + dir.file("model.ckpt") + " --corpus " +
                       dir.file("train.jsonl");
  auto no_prime = run(dir, common + " --k 0 --repetitions 5");
  CHECK(no_prime.exit_code == 2);
  CHECK(no_prime.output.find("priming") != std::string::npos);

  write_train_config(dir, "cfg_rp.json", 6, 2, R"(,"stochastic_split":true)");
  REQUIRE(run(dir, "train --config " + dir.file("cfg_rp.json")).exit_code == 0);
  auto too_few = run(dir, common + " --k 0 --repetitions 1");
  CHECK(too_few.exit_code == 2);
  auto bad_k = run(dir, common + " --k 7 --repetitions 5");
  CHECK(bad_k.exit_code == 2);

  auto ok = run(dir, common + " --k 0 --k 1 --k 2 --repetitions 5");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("instances/sec") != std::string::npos);
}
