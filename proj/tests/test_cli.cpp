// Runs the installed-style CLI binary and checks exit codes and output files.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

#ifndef LMDROP_CLI_PATH
#error "LMDROP_CLI_PATH must be defined"
#endif

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(LMDROP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> lines_of(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

bool contains_line(const fs::path& path, const std::string& line) {
  for (const auto& l : lines_of(path)) {
    if (l == line) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("cli end to end") {
  const fs::path dir = fs::temp_directory_path() / "lmdrop_cli";
  fs::remove_all(dir);
  const std::string d = dir.string();

  CHECK(run("simulate --scheme conditional --T 10 --seed 7 --out " + d + "/x") == 2);
  CHECK(run("bogus") == 2);
  CHECK(run("--help") == 0);

  REQUIRE(run("simulate --scheme conditional --n 250 --T 10 --seed 7 --out " + d + "/sim") == 0);
  const auto data = lines_of(dir / "sim" / "data.csv");
  std::vector<std::string> ids;
  for (std::size_t i = 1; i < data.size(); ++i) ids.push_back(data[i].substr(0, data[i].find(',')));
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  CHECK(ids.size() == 250);
  CHECK(contains_line(dir / "sim" / "manifest.txt", "seed = 7"));

  REQUIRE(run("simulate --scheme joint --n 500 --T 5 --seed 1 --out " + d + "/joint") == 0);
  const auto jm = dir / "joint" / "manifest.txt";
  CHECK(contains_line(jm, "pi.1 = 0.59999999999999998"));
  CHECK(contains_line(jm, "A.1.1 = 0.80000000000000004"));
  CHECK(contains_line(jm, "dropout_logit.1 = -3"));
  CHECK(contains_line(jm, "dropout_logit.2 = -1.5"));

  // Same seed, same bytes.
  REQUIRE(run("simulate --scheme joint --n 500 --T 5 --seed 1 --out " + d + "/joint2") == 0);
  CHECK(lines_of(dir / "joint" / "data.csv") == lines_of(dir / "joint2" / "data.csv"));

  const std::string sim = " --data " + d + "/sim/data.csv --config " + d + "/sim/config.txt";
  REQUIRE(run("fit" + sim + " --starts 3 --long-runs 2 --threads 1 --out " + d + "/fit") == 0);
  CHECK(lines_of(dir / "fit" / "params.txt").size() == 9);
  CHECK(contains_line(dir / "fit" / "fit.txt", "converged = true"));
  for (const char* f : {"trace.csv", "posteriors.csv", "decoded.csv", "H.txt", "manifest.txt"}) {
    CHECK(fs::exists(dir / "fit" / f));
  }
  REQUIRE(run("fit" + sim + " --starts 3 --long-runs 2 --threads 1 --out " + d + "/fit_again") == 0);
  CHECK(lines_of(dir / "fit" / "params.txt") == lines_of(dir / "fit_again" / "params.txt"));
  // The thread count must not change the result.
  REQUIRE(run("fit" + sim + " --starts 3 --long-runs 2 --threads 3 --out " + d + "/fit_threads") == 0);
  CHECK(lines_of(dir / "fit" / "params.txt") == lines_of(dir / "fit_threads" / "params.txt"));

  REQUIRE(run("fit" + sim + " --model m2 --starts 3 --long-runs 1 --out " + d + "/fit2") == 0);
  CHECK(contains_line(dir / "fit2" / "fit.txt", "model = m2"));
  CHECK(lines_of(dir / "fit2" / "params.txt").size() == 5);

  REQUIRE(run("fit" + sim + " --variant saturated --starts 2 --long-runs 1 --out " + d + "/fits") == 0);
  CHECK(contains_line(dir / "fits" / "fit.txt", "variant = saturated"));
  CHECK(lines_of(dir / "fits" / "params.txt").size() == 33);

  // Exhausting the iteration budget is reported with exit code 3 and the results are still written.
  REQUIRE(run("fit" + sim + " --starts 1 --long-runs 1 --max-iter 2 --out " + d + "/fit_nc") == 3);
  CHECK(contains_line(dir / "fit_nc" / "fit.txt", "converged = false"));
  CHECK(run("bootstrap --fit " + d + "/fit_nc --data " + d + "/sim/data.csv --B 5 --out " + d + "/boot_nc") == 4);

  REQUIRE(run("bootstrap --fit " + d + "/fit2 --data " + d + "/sim/data.csv --B 10 --threads 1 --out " + d +
              "/boot") == 0);
  CHECK(lines_of(dir / "boot" / "bootstrap_se.csv").size() == 6);
  CHECK(contains_line(dir / "boot" / "manifest.txt", "B = 10"));

  REQUIRE(run("decode --fit " + d + "/fit --data " + d + "/sim/data.csv --out " + d + "/dec") == 0);
  const auto att = lines_of(dir / "dec" / "attrition.csv");
  REQUIRE(att.size() == 3);
  CHECK(att[0].rfind("state,S=1,", 0) == 0);

  REQUIRE(run("select" + sim + " --J-min 1 --J-max 2 --models m2 --out " + d + "/sel") == 0);
  const auto crit = lines_of(dir / "sel" / "criteria.csv");
  REQUIRE(crit.size() == 3);
  CHECK(crit[0] == "model,J,k,loglik,AIC,AIC3,AICc,AICu,BIC,best_by");

  REQUIRE(run("replicate --scheme joint --reps 2 --n 60 --starts 2 --out " + d + "/rep") == 0);
  CHECK(lines_of(dir / "rep" / "replication.csv").size() == 3);

  fs::remove_all(dir);
}
