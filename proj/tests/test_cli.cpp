#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ivfrailty/cli.hpp"
#include "ivfrailty/io.hpp"
#include "ivfrailty/simulation.hpp"

using namespace ivfrailty;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ivfrailty-cli-tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scenario_csv(int n, std::uint64_t seed) {
  SeededStream stream(seed, 0);
  const SimulatedData data = generate(ScenarioSpec::preset(1, n), stream);
  const fs::path path = scratch("scenario-" + std::to_string(n) + "-" + std::to_string(seed) + ".csv");
  std::ofstream out(path);
  write_subjects_csv(out, data.dataset);
  return path;
}

}  // namespace

TEST_CASE("csv reader") {
  std::istringstream good("time,status,treatment,x1,z1\n1.5,1,0,0.2,1.1\n2.5,0,1,-0.3,0.4\n");
  const CsvTable t = read_subjects_csv(good);
  REQUIRE(t.records.size() == 2);
  CHECK(t.p == 1);
  CHECK(t.K == 1);
  CHECK(t.records[1].treated);
  CHECK_FALSE(t.records[1].event);
  CHECK(t.records[0].instruments[0] == 1.1);

  std::istringstream reordered("z1,treatment,time,status\n0.5,1,3.0,1\n");
  const CsvTable r = read_subjects_csv(reordered);
  CHECK(r.p == 0);
  CHECK(r.records[0].time == 3.0);

  const auto fails_with = [](const std::string& text, const std::string& fragment) {
    std::istringstream in(text);
    try {
      read_subjects_csv(in);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InputFormat);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
      return;
    }
    FAIL("expected an input error for: " << text);
  };
  fails_with("time,treatment,x1,z1\n1,1,0,1\n", "status");
  fails_with("time,status,treatment,x1\n1,1,1,0\n", "z1");
  fails_with("time,status,treatment,z1\n1,2,1,0\n", "status");
  fails_with("time,status,treatment,z1\n1,abc,1,0\n", "abc");
  fails_with("time,status,treatment,z1\n1,1,1\n", "fields");
  fails_with("time,status,treatment,z2\n1,1,1,0\n", "z2");
}

TEST_CASE("fit writes a result and reports convergence") {
  const fs::path csv = scenario_csv(150, 3);
  const Run r = run({"fit", csv.string(), "--B", "30", "--seed", "5"});
  CHECK(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["hazard_ratio"].get<double>() > 0.0);
  CHECK(j["converged"].get<bool>());
  CHECK(j["alpha"].size() == 2);
  CHECK(j["beta_terms"][0] == "w");
  CHECK(j["baseline"]["jumps"].size() == j["baseline"]["event_times"].size());
  CHECK(j["draws"] == "frozen");

  const Run csv_out = run({"fit", csv.string(), "--B", "30", "--format", "csv"});
  CHECK(csv_out.code == kExitOk);
  CHECK(csv_out.out.rfind("parameter,estimate\n", 0) == 0);
  CHECK(csv_out.out.find("beta[w],") != std::string::npos);
}

TEST_CASE("fit exit codes") {
  const fs::path csv = scenario_csv(150, 3);
  const Run capped = run({"fit", csv.string(), "--B", "30", "--max-iter", "1", "--epsilon", "1e-9"});
  CHECK(capped.code == kExitNonConvergence);
  CHECK_FALSE(nlohmann::json::parse(capped.out)["converged"].get<bool>());

  const fs::path missing = scratch("missing-status.csv");
  std::ofstream(missing) << "time,treatment,x1,z1\n1,1,0,1\n2,0,1,2\n";
  const Run bad = run({"fit", missing.string()});
  CHECK(bad.code == kExitInputError);
  CHECK(bad.err.find("status") != std::string::npos);

  CHECK(run({"fit", scratch("does-not-exist.csv").string()}).code == kExitInputError);
  CHECK(run({"fit", csv.string(), "--B", "0"}).code == kExitInputError);
  CHECK(run({"fit", csv.string(), "--bogus"}).code == kExitInputError);
  CHECK(run({"fit", csv.string(), "--format", "xml"}).code == kExitInputError);
}

TEST_CASE("fit with bootstrap") {
  const fs::path csv = scenario_csv(100, 4);
  const Run r = run({"fit", csv.string(), "--B", "20", "--bootstrap", "4"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["bootstrap"]["successes"].get<int>() + j["bootstrap"]["failures"].get<int>() == 4);
  CHECK(j["bootstrap"]["beta_se"].size() == 2);
}

TEST_CASE("simulate") {
  const Run table = run({"simulate", "--scenario", "1", "--n", "100", "--B", "20", "--reps", "2", "--seed", "7"});
  CHECK(table.code == kExitOk);
  CHECK(table.out.find("Ordinary-infeasible") != std::string::npos);
  CHECK(table.out.find("Mean(SD)") != std::string::npos);

  const fs::path json = scratch("sim.json");
  const Run to_file = run({"simulate", "--scenario", "1", "--n", "100", "--B", "20", "--reps", "2", "--seed", "7",
                           "--out", json.string()});
  CHECK(to_file.code == kExitOk);
  CHECK(to_file.out == table.out);
  const auto j = nlohmann::json::parse(slurp(json));
  CHECK(j["summaries"].size() == 9);
  CHECK(j["reps"] == 2);

  const fs::path csv = scratch("sim.csv");
  CHECK(run({"simulate", "--n", "100", "--B", "20", "--reps", "2", "--format", "csv", "--out", csv.string()}).code ==
        kExitOk);
  CHECK(slurp(csv).rfind(std::string(kSummaryCsvHeader) + "\n", 0) == 0);

  const Run out_of_range = run({"simulate", "--scenario", "8"});
  CHECK(out_of_range.code == kExitInputError);
  CHECK(out_of_range.err.find("1..7") != std::string::npos);
  CHECK(run({"simulate", "--reps", "-1"}).code == kExitInputError);
  CHECK(run({}).code == kExitInputError);
}

TEST_CASE("help documents every flag") {
  const Run fit_help = run({"fit", "--help"});
  CHECK(fit_help.code == kExitOk);
  const Run sim_help = run({"simulate", "--help"});
  for (const char* flag : {"--B", "--seed", "--epsilon", "--max-iter", "--estimate-sigma-u", "--out", "--format",
                           "--jobs"}) {
    CHECK(fit_help.out.find(flag) != std::string::npos);
    CHECK(sim_help.out.find(flag) != std::string::npos);
  }
  CHECK(fit_help.out.find("--bootstrap") != std::string::npos);
  for (const char* flag : {"--scenario", "--n", "--reps"}) CHECK(sim_help.out.find(flag) != std::string::npos);
}

TEST_CASE("outputs are byte-identical across runs") {
  const fs::path csv = scenario_csv(120, 8);
  const std::vector<std::string> fit_args{"fit", csv.string(), "--B", "20", "--seed", "3"};
  CHECK(run(fit_args).out == run(fit_args).out);
  const std::vector<std::string> sim_args{"simulate", "--n", "80", "--B", "10", "--reps", "2", "--seed", "9"};
  CHECK(run(sim_args).out == run(sim_args).out);
}
