#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "ctg/strategies.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& workdir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "ctgen_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run_cli(const std::string& args) {
  const char* bin = std::getenv("CTESTGEN_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "CTESTGEN_BIN must point at the ctestgen binary");
  fs::path out = workdir() / "stdout.txt";
  fs::path err = workdir() / "stderr.txt";
  std::string cmd = std::string(bin) + " " + args + " >" + out.string() + " 2>" + err.string();
  int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(raw);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

// three sentences, interior candidates only
const char* kSmallText =
    "Begin here now. Apple grape lemon melon peach berry mango olive. Close out.";

// exactly 40 eligible interior words
std::string forty_word_text() {
  testutil::Rng rng(2024);
  return testutil::make_text(rng, 40, 6);
}

std::size_t feature_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  return rows - 1;  // header
}

fs::path prepared_model() {
  static fs::path model_path = [] {
    fs::path text = workdir() / "train_text.txt";
    write_file(text, kSmallText);
    RunResult ex = run_cli("extract --text " + text.string() + " --features-out " +
                           (workdir() / "train_features.csv").string());
    REQUIRE(ex.exit_code == 0);
    std::size_t rows = feature_rows(workdir() / "train_features.csv");
    std::ostringstream labels;
    for (std::size_t r = 0; r < rows; ++r)
      labels << (0.1 + 0.8 * static_cast<double>(r) / static_cast<double>(rows)) << "\n";
    write_file(workdir() / "labels.txt", labels.str());
    RunResult tr = run_cli("train --features " + (workdir() / "train_features.csv").string() +
                           " --labels " + (workdir() / "labels.txt").string() +
                           " --model-out " + (workdir() / "model.json").string() +
                           " --rounds 12 --depth 3");
    REQUIRE(tr.exit_code == 0);
    REQUIRE(tr.out.find("train_rmse=") != std::string::npos);
    return workdir() / "model.json";
  }();
  return model_path;
}

}  // namespace

TEST_CASE("extract reports the candidate count") {
  fs::path text = workdir() / "small.txt";
  write_file(text, kSmallText);
  RunResult r = run_cli("extract --text " + text.string() + " --features-out " +
                        (workdir() / "small_features.csv").string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("n=8") != std::string::npos);
  CHECK(fs::exists(workdir() / "small_features.csv"));

  RunResult j = run_cli("--json extract --text " + text.string() + " --features-out " +
                        (workdir() / "small_features.csv").string());
  CHECK(j.exit_code == 0);
  CHECK(j.out.find("\"n\":8") != std::string::npos);
}

TEST_CASE("extract fails cleanly on empty input") {
  fs::path text = workdir() / "empty.txt";
  write_file(text, "   \n");
  RunResult r = run_cli("extract --text " + text.string() + " --features-out " +
                        (workdir() / "never.csv").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("train rejects mismatched labels") {
  prepared_model();
  write_file(workdir() / "short_labels.txt", "0.5\n0.5\n");
  RunResult r = run_cli("train --features " + (workdir() / "train_features.csv").string() +
                        " --labels " + (workdir() / "short_labels.txt").string() +
                        " --model-out " + (workdir() / "nope.json").string());
  CHECK(r.exit_code == 2);
}

TEST_CASE("training twice with one seed is byte-identical") {
  prepared_model();
  RunResult again = run_cli("train --features " + (workdir() / "train_features.csv").string() +
                            " --labels " + (workdir() / "labels.txt").string() +
                            " --model-out " + (workdir() / "model2.json").string() +
                            " --rounds 12 --depth 3");
  REQUIRE(again.exit_code == 0);
  CHECK(slurp(workdir() / "model.json") == slurp(workdir() / "model2.json"));
}

TEST_CASE("generate writes a result and repeats byte-identically") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "gen_text.txt";
  write_file(text, kSmallText);
  const std::string base = "generate --text " + text.string() + " --model " + model.string() +
                           " --tau 0.3 --m 3 --strategy mip --out ";
  RunResult a = run_cli(base + (workdir() / "gen_a.json").string());
  REQUIRE(a.exit_code == 0);
  CHECK(a.out.find("tau_hat=") != std::string::npos);
  CHECK(a.out.find("status=optimal") != std::string::npos);
  CHECK(a.out.find("nodes=") != std::string::npos);
  RunResult b = run_cli(base + (workdir() / "gen_b.json").string());
  REQUIRE(b.exit_code == 0);
  CHECK(slurp(workdir() / "gen_a.json") == slurp(workdir() / "gen_b.json"));

  ctg::strat::GenerationResult parsed =
      ctg::strat::result_from_json(slurp(workdir() / "gen_a.json"));
  CHECK(parsed.strategy == "mip");
  CHECK(parsed.ctest.gaps.size() == 3);
}

TEST_CASE("stat strategy warns that the target is ignored") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "gen_text2.txt";
  write_file(text, kSmallText);
  RunResult r = run_cli("generate --text " + text.string() + " --model " + model.string() +
                        " --tau 0.3 --m 3 --strategy stat --out " +
                        (workdir() / "gen_stat.json").string());
  CHECK(r.exit_code == 0);
  CHECK(r.err.find("ignores --tau") != std::string::npos);
}

TEST_CASE("mip generation beats the baselines on the same input") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "gen_text3.txt";
  write_file(text, kSmallText);
  auto objective_of = [&](const std::string& strategy) {
    fs::path out = workdir() / ("dom_" + strategy + ".json");
    RunResult r = run_cli("generate --text " + text.string() + " --model " + model.string() +
                          " --tau 0.4 --m 3 --strategy " + strategy + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    return ctg::strat::result_from_json(slurp(out)).objective;
  };
  double mip = objective_of("mip");
  CHECK(mip <= objective_of("stat"));
  CHECK(mip <= objective_of("sel"));
  CHECK(mip <= objective_of("size"));
}

TEST_CASE("pins survive the whole pipeline") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "gen_text4.txt";
  write_file(text, kSmallText);
  RunResult r = run_cli("generate --text " + text.string() + " --model " + model.string() +
                        " --tau 0.4 --m 3 --strategy mip --pin 2:3 --out " +
                        (workdir() / "gen_pin.json").string());
  REQUIRE(r.exit_code == 0);
  ctg::strat::GenerationResult parsed =
      ctg::strat::result_from_json(slurp(workdir() / "gen_pin.json"));
  bool pinned = false;
  for (const auto& g : parsed.ctest.gaps) pinned |= (g.candidate_index == 2 && g.size == 3);
  CHECK(pinned);
}

TEST_CASE("oracle matches on a small instance") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "oracle_text.txt";
  write_file(text, kSmallText);
  RunResult r = run_cli("oracle --text " + text.string() + " --model " + model.string() +
                        " --tau 0.35 --m 2");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("MATCH") != std::string::npos);
  CHECK(r.out.find("MISMATCH") == std::string::npos);
}

TEST_CASE("oracle refuses full-scale enumeration with exit 4") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "forty.txt";
  write_file(text, forty_word_text());
  RunResult r = run_cli("oracle --text " + text.string() + " --model " + model.string() +
                        " --tau 0.5 --m 20");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("137846528820 placements") != std::string::npos);
}

TEST_CASE("export emits solvable files and model statistics") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "export_text.txt";
  write_file(text, kSmallText);
  RunResult lp = run_cli("export --text " + text.string() + " --model " + model.string() +
                         " --tau 0.4 --m 2 --format lp --out " +
                         (workdir() / "model.lp").string());
  CHECK(lp.exit_code == 0);
  CHECK(lp.out.find("\"rows\":") != std::string::npos);
  std::string lp_text = slurp(workdir() / "model.lp");
  CHECK(lp_text.find("Minimize") != std::string::npos);
  CHECK(lp_text.find("tau_hat") != std::string::npos);

  RunResult mps = run_cli("export --text " + text.string() + " --model " + model.string() +
                          " --tau 0.4 --m 2 --format mps --out " +
                          (workdir() / "model.mps").string());
  CHECK(mps.exit_code == 0);
  CHECK(slurp(workdir() / "model.mps").find("ENDATA") != std::string::npos);
}

TEST_CASE("bench and eval commands produce the report CSVs") {
  fs::path model = prepared_model();
  fs::path dir = workdir() / "instances";
  fs::create_directories(dir);
  write_file(dir / "a.txt", kSmallText);
  write_file(dir / "b.txt", "Open line. Brick stone cedar maple plumb chalk. End line.");
  RunResult bench = run_cli("bench --instances " + dir.string() + " --model " +
                            model.string() + " --tau 0.4 --m 2 --out " +
                            (workdir() / "bench.csv").string());
  REQUIRE(bench.exit_code == 0);
  std::string csv = slurp(workdir() / "bench.csv");
  CHECK(csv.rfind("encoding,mu,sigma,max,min,n_limit\n", 0) == 0);
  for (const char* enc : {"epigraph", "minmax", "indicator", "pwl"})
    CHECK(csv.find(enc) != std::string::npos);

  // results directory for eval
  fs::path results = workdir() / "results";
  fs::create_directories(results);
  for (const char* strategy : {"mip", "size"}) {
    RunResult g = run_cli("generate --text " + (dir / "a.txt").string() + " --model " +
                          model.string() + " --tau 0.4 --m 2 --strategy " +
                          std::string(strategy) + " --out " +
                          (results / (std::string(strategy) + ".json")).string());
    REQUIRE(g.exit_code == 0);
  }
  RunResult ev = run_cli("eval --results " + results.string() + " --out " +
                         (workdir() / "eval.csv").string());
  REQUIRE(ev.exit_code == 0);
  std::string eval_csv = slurp(workdir() / "eval.csv");
  CHECK(eval_csv.rfind("strategy,tau,mu,sigma\n", 0) == 0);
  CHECK(eval_csv.find("mip,") != std::string::npos);
  CHECK(eval_csv.find("size,") != std::string::npos);
}

TEST_CASE("config file values are read and flags override them") {
  fs::path model = prepared_model();
  fs::path text = workdir() / "cfg_text.txt";
  write_file(text, kSmallText);
  write_file(workdir() / "run.cfg",
             "json=true\n");
  RunResult r = run_cli("--config " + (workdir() / "run.cfg").string() + " extract --text " +
                        text.string() + " --features-out " +
                        (workdir() / "cfg_features.csv").string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("\"n\":") != std::string::npos);  // json mode came from the config
}
