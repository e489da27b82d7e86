// Command-line driver: scenario runs, genericity scans, and the closed-form
// verification battery.  Exit codes: 0 pass, 1 task failure, 2 usage or
// schema error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "subrq/runner.hpp"
#include "subrq/scenario.hpp"

namespace {

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw subrq::DomainError("cannot write '" + p.string() + "'");
  out << text;
}

int cmd_run(const std::string& file, int threads, const std::string& out_dir) {
  subrq::scenario::Scenario sc;
  try {
    sc = subrq::scenario::load_scenario(file);
  } catch (const subrq::Error& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  }
  subrq::runner::RunReport rep = subrq::runner::run_scenario(sc, threads);

  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j = rep.to_json();
  j["timestamp"] = utc_timestamp();
  write_file(dir / "report.json", j.dump(2) + "\n");
  write_file(dir / "report.txt", rep.to_table());
  for (const auto& t : rep.tasks)
    for (const auto& [name, text] : t.artifacts) write_file(dir / name, text);

  std::cout << rep.to_table();
  return rep.pass ? 0 : 1;
}

int cmd_scan(int dim, int deg, int samples, unsigned seed, int threads,
             const std::string& out_dir) {
  subrq::runner::ScanStats st;
  try {
    st = subrq::runner::run_scan(dim, deg, samples, seed, 5, 0.0, threads);
  } catch (const subrq::Error& e) {
    std::cerr << "scan error: " << e.what() << "\n";
    return 2;
  }
  nlohmann::ordered_json j;
  j["schema"] = "subrq-scan/v1";
  j["dim"] = dim;
  j["deg"] = deg;
  j["seed"] = seed;
  nlohmann::ordered_json stats = subrq::runner::scan_to_json(st);
  for (auto& [k, v] : stats.items()) j[k] = v;
  j["timestamp"] = utc_timestamp();

  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "scan.json", j.dump(2) + "\n");
  std::cout << "scan d=" << dim << ": " << st.spanning << "/" << st.samples
            << " spanning (rate " << st.pass_rate() << ")\n";
  return 0;
}

int cmd_formula_verify(int dim) {
  std::vector<subrq::runner::BatteryRow> rows;
  try {
    rows = subrq::runner::formula_battery(dim);
  } catch (const subrq::Error& e) {
    std::cerr << "formula-verify error: " << e.what() << "\n";
    return 2;
  }
  bool all = true;
  std::cout << "closed-form battery, d=" << dim << "\n";
  for (const auto& r : rows) {
    std::string name = r.name;
    name.resize(22, ' ');
    std::cout << "  " << name << " err=" << r.err << "  tol=" << r.tol
              << "  " << (r.pass() ? "pass" : "FAIL") << "\n";
    all = all && r.pass();
  }
  std::cout << "battery: " << (all ? "PASS" : "FAIL") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sub-bundle Hamiltonian dynamics toolkit"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "execute a scenario file");
  std::string file;
  int run_threads = 1;
  std::string run_out = ".";
  run->add_option("file", file, "scenario file")->required();
  run->add_option("--threads", run_threads, "worker thread cap")
      ->check(CLI::PositiveNumber);
  run->add_option("--out", run_out, "output directory");

  auto* scan = app.add_subcommand("scan", "genericity scan over random jets");
  int dim = 2, deg = 3, samples = 0, scan_threads = 1;
  unsigned seed = 1;
  std::string scan_out = ".";
  scan->add_option("--dim", dim, "matrix dimension d")->required();
  scan->add_option("--samples", samples, "sample count")->required();
  scan->add_option("--seed", seed, "base seed")->required();
  scan->add_option("--deg", deg, "jet degree of sampled curves");
  scan->add_option("--threads", scan_threads, "worker thread cap")
      ->check(CLI::PositiveNumber);
  scan->add_option("--out", scan_out, "output directory");

  auto* fv = app.add_subcommand("formula-verify", "closed-form battery");
  int fdim = 2;
  fv->add_option("--dim", fdim, "matrix dimension d")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (run->parsed()) return cmd_run(file, run_threads, run_out);
  if (scan->parsed()) return cmd_scan(dim, deg, samples, seed, scan_threads, scan_out);
  if (fv->parsed()) return cmd_formula_verify(fdim);
  return 2;
}
