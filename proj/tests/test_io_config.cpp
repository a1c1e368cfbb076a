#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "krot/config.hpp"
#include "krot/error.hpp"
#include "krot/io.hpp"
#include "krot/run.hpp"
#include "support.hpp"

using namespace krot;
using namespace krot::test;
namespace fs = std::filesystem;

namespace {

const char* kGaussianFixture = R"("fixture": {"gaussian": {
    "source": {"mean": [0, 0], "covariance": [[1, 0], [0, 1]]},
    "target": {"mean": [0, 0], "covariance": [[2, 1], [1, 2]]}, "nodes": 6}})";

std::string config(const std::string& body) { return std::string("{") + kGaussianFixture + ", " + body + "}"; }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("krot_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("format_number round-trips") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 200; ++k) {
    const double v = u(rng) * std::pow(10.0, k % 30 - 15);
    CHECK(std::stod(format_number(v)) == v);
  }
  CHECK(format_number(INFINITY) == "inf");
  CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("grid density and discrete measure serialization") {
  auto d = discretize(correlated_2d(), uniform_grid({-3, -3}, {3, 3}, 7));
  auto back = grid_density_from_json(grid_density_to_json(d));
  CHECK(back.grid() == d.grid());
  for (std::size_t k = 0; k < d.grid().size(); ++k) CHECK(back.value(k) == doctest::Approx(d.value(k)).epsilon(1e-14));
  auto csv = grid_density_from_csv(grid_density_to_csv(d));
  CHECK(csv.grid() == d.grid());

  std::mt19937_64 rng(32);
  auto m = random_measure(rng, 9, 3, false);
  auto mj = discrete_measure_from_json(discrete_measure_to_json(m));
  CHECK(mj.points() == m.points());
  CHECK((mj.weights() - m.weights()).cwiseAbs().maxCoeff() <= 1e-16);
  auto mc = discrete_measure_from_csv(discrete_measure_to_csv(m));
  CHECK(mc.points() == m.points());

  KROT_CHECK_THROWS_CONTAINING(discrete_measure_from_json("{\"points\": [[0]]}"), "weights");
}

TEST_CASE("coupling and report serialization") {
  auto mu = atoms_1d({0, 1}), nu = atoms_1d({2, 3});
  auto p = make_coupling(mu, nu, {{0, 0, 0.5}, {1, 1, 0.5}});
  CHECK(coupling_to_csv(p) == "row,col,mass\n0,0,0.5\n1,1,0.5\n");
  auto j = nlohmann::json::parse(coupling_to_json(p));
  CHECK(j["entries"]["mass"].size() == 2);
  CHECK(j["entries"]["col"][1] == 1);

  SweepReport r;
  r.experiment = "sweep-hard";
  r.epsilons = {1};
  SweepCell cell;
  cell.epsilon = 1;
  cell.marginal_agreement = {0.1};
  r.cells.push_back(cell);
  auto rj = nlohmann::json::parse(sweep_report_to_json(r));
  CHECK(rj["schema_version"] == kReportSchemaVersion);
  CHECK(rj["cells"][0]["lambda"].is_null());  // hard constraint
  auto rows = sweep_report_to_csv(r);
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 2);
}

TEST_CASE("parse_config accepts a minimal solve config") {
  auto cfg = parse_config_text(config(R"("experiment": "solve", "cost": {"epsilon": 1}, "solver": {"kind": "exact"})"));
  CHECK(*cfg.experiment == Experiment::kSolve);
  CHECK(cfg.fixture_kind == "gaussian");
  CHECK(cfg.epsilons == std::vector<double>{1.0});
  CHECK(cfg.fixture.source.size() == 36);
}

TEST_CASE("parse_config rejects malformed configs with the key path") {
  auto msg = [](const std::string& text) { return error_message([&] { parse_config_text(text); }); };
  auto both = msg(R"({"experiment": "solve", "cost": {"epsilon": 1}, "solver": {"kind": "exact"},
      "fixture": {"gaussian": {"source": {"mean": [0], "covariance": [[1]]}, "target": {"mean": [0], "covariance": [[1]]}, "nodes": 4},
                  "atoms": {"source": {"points": [[0]], "weights": [1]}, "target": {"points": [[1]], "weights": [1]}}}})");
  CHECK(both.find("fixture.gaussian") != std::string::npos);
  CHECK(both.find("fixture.atoms") != std::string::npos);

  auto lam = msg(config(R"("experiment": "solve", "cost": {"epsilon": 1},
      "solver": {"kind": "soft-oracle", "lambda": [1, 2], "tolerance": 1e-8, "max_iterations": 10})"));
  CHECK(lam.find("list requires a sweep experiment") != std::string::npos);
  CHECK(lam.find("solver.lambda") != std::string::npos);

  CHECK(msg(config(R"("experiment": "solve", "cost": {"epsilon": 1})")).find("solver.kind: missing required key") !=
        std::string::npos);
  CHECK(msg(config(R"("experiment": "solve", "cost": {"epsilon": 1, "eps": 2}, "solver": {"kind": "exact"})"))
            .find("cost.eps: unknown key") != std::string::npos);
  CHECK(msg(config(R"("experiment": "solve", "cost": {"epsilon": "x"}, "solver": {"kind": "exact"})"))
            .find("cost.epsilon") != std::string::npos);
  CHECK(msg(config(R"("experiment": "sweep-soft", "solver": {"kind": "semi-relaxed", "eta": 0.01, "max_iterations": 10})"))
            .find("solver.tolerance: missing required key") != std::string::npos);
  CHECK(msg(config(R"("experiment": "sweep-soft", "solver": {"kind": "soft-oracle", "tolerance": -1, "max_iterations": 10})"))
            .find("solver.tolerance: must be positive") != std::string::npos);
  CHECK(msg(config(R"("experiment": "nope")")).find("unknown experiment") != std::string::npos);
  CHECK(msg("{not json").find("malformed JSON") != std::string::npos);

  auto conflict = error_message([&] {
    parse_config_text(config(R"("experiment": "kr")"), ".", Experiment::kSolve);
  });
  CHECK(conflict.find("conflicts with the requested subcommand") != std::string::npos);
}

TEST_CASE("parse_config echoes schedule defaults") {
  auto cfg = parse_config_text(config(R"("experiment": "sweep-soft", "solver": {"kind": "soft-oracle", "tolerance": 1e-8, "max_iterations": 100})"));
  CHECK(cfg.epsilons == std::vector<double>{1, 1e-1, 1e-2, 1e-3, 1e-4});
  CHECK(cfg.lambdas == std::vector<double>{1, 10, 100, 1000, 1e6});
  CHECK(std::find(cfg.defaults.begin(), cfg.defaults.end(), "cost.epsilon") != cfg.defaults.end());
  CHECK(std::find(cfg.defaults.begin(), cfg.defaults.end(), "solver.lambda") != cfg.defaults.end());
}

TEST_CASE("parse_config reads fixture files relative to the config") {
  auto dir = scratch("files");
  write_text_file((dir / "mu.csv").string(), discrete_measure_to_csv(atoms_1d({0, 1})));
  write_text_file((dir / "nu.json").string(), discrete_measure_to_json(atoms_1d({2, 3})));
  write_text_file((dir / "run.json").string(),
                  R"({"experiment": "solve", "fixture": {"atoms": {"source": "mu.csv", "target": "nu.json"}},
                      "cost": {"epsilon": 1}, "solver": {"kind": "exact"}})");
  auto cfg = parse_config((dir / "run.json").string());
  CHECK(cfg.fixture.target.point(1)[0] == 3.0);

  write_text_file((dir / "missing.json").string(),
                  R"({"experiment": "solve", "fixture": {"atoms": {"source": "nope.csv", "target": "nu.json"}},
                      "cost": {"epsilon": 1}, "solver": {"kind": "exact"}})");
  try {
    parse_config((dir / "missing.json").string());
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
    CHECK(std::string(e.what()).find("fixture.atoms.source") != std::string::npos);
  }
}

TEST_CASE("run writes reports and is reproducible") {
  auto dir = scratch("run");
  auto cfg = parse_config_text(
      R"({"experiment": "kl-decay", "fixture": {"atoms": {"source": {"points": [[0], [1]], "weights": [1, 1]},
          "target": {"points": [[2], [3]], "weights": [1, 1]}}},
          "cost": {"epsilon": 1}, "solver": {"kind": "soft-oracle", "tolerance": 1e-9, "max_iterations": 20000}})");
  RunOptions opt;
  opt.output_dir = (dir / "a").string();
  std::ostringstream out, err;
  REQUIRE(run(cfg, opt, out, err) == 0);
  CHECK(err.str().empty());
  const std::string printed = out.str();
  CHECK(std::count(printed.begin(), printed.end(), '\n') == 4);

  auto table = read_text_file((dir / "a" / "kl_decay.csv").string());
  std::istringstream lines(table);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "lambda,kl,bound");
  int rows = 0;
  while (std::getline(lines, line)) {
    double lambda = 0, kl = 0, bound = 0;
    char c1 = 0, c2 = 0;
    std::istringstream(line) >> lambda >> c1 >> kl >> c2 >> bound;
    CHECK(kl <= bound);
    ++rows;
  }
  CHECK(rows == 4);

  opt.output_dir = (dir / "b").string();
  opt.quiet = true;
  std::ostringstream quiet;
  REQUIRE(run(cfg, opt, quiet, err) == 0);
  CHECK(quiet.str().empty());
  for (const char* name : {"report.json", "cells.csv", "kl_decay.csv"})
    CHECK(read_text_file((dir / "a" / name).string()) == read_text_file((dir / "b" / name).string()));
}

TEST_CASE("run reports failures in report.json") {
  auto dir = scratch("fail");
  auto cfg = parse_config_text(config(R"("experiment": "solve", "cost": {"epsilon": 1},
      "solver": {"kind": "sinkhorn", "eta": 1e-6, "tolerance": 1e-15, "max_iterations": 1, "anneal": false})"));
  RunOptions opt;
  opt.output_dir = dir.string();
  std::ostringstream out, err;
  const int code = run(cfg, opt, out, err);
  CHECK(code == static_cast<int>(ErrorCode::kSolver));
  auto report = nlohmann::json::parse(read_text_file((dir / "report.json").string()));
  CHECK(report["status"] == "error");
  CHECK(!err.str().empty());
}
