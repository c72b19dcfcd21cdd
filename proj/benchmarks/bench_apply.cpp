// Direct, factorized and multiplier apply paths on the same operators.
// --csv=PATH additionally writes op,grid,levels,sectors,wall_ns,checksum.

#include <benchmark/benchmark.h>

#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mpfio/decomp.hpp"
#include "mpfio/evaluator.hpp"

using namespace mpfio;

namespace {

SampledField random_input(const LatticeGrid& g) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> n;
  SampledField f(g);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = {n(rng), n(rng)};
  return f;
}

double checksum(const SampledField& f) {
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += std::abs(f[k]);
  return s;
}

OperatorSpec make_op(const std::string& phase, int points) {
  ProductSpace sp({1, 1});
  auto g = make_grid(sp, 1.0, points);
  auto phi = phase == "halfwave" ? PhaseSpec::halfwave(sp) : PhaseSpec::perturbed(sp, 0.1);
  return make_operator(SymbolSpec::critical(sp, 0.8), phi, g);
}

void label(benchmark::State& state, const std::string& op, int points, const std::string& levels,
           const std::string& sectors, double sum) {
  state.SetLabel(op + "|" + std::to_string(points) + "x" + std::to_string(points) + "|" + levels + "|" + sectors);
  state.counters["checksum"] = sum;
}

void run_path(benchmark::State& state, const std::string& phase, ApplyPath path, const char* name) {
  const int points = static_cast<int>(state.range(0));
  auto op = make_op(phase, points);
  auto f = random_input(op.grid);
  ApplyRequest req;
  req.path = path;
  SampledField out(op.grid);
  for (auto _ : state) {
    out = evaluate(op, f, req);
    benchmark::DoNotOptimize(out);
  }
  label(state, std::string(name) + "_" + phase, points, "max", "-", checksum(out));
}

void BM_direct_halfwave(benchmark::State& s) { run_path(s, "halfwave", ApplyPath::direct, "direct"); }
void BM_factorized_halfwave(benchmark::State& s) { run_path(s, "halfwave", ApplyPath::factorized, "factorized"); }
void BM_multiplier_halfwave(benchmark::State& s) { run_path(s, "halfwave", ApplyPath::multiplier, "multiplier"); }
void BM_direct_perturbed(benchmark::State& s) { run_path(s, "perturbed", ApplyPath::direct, "direct"); }
void BM_factorized_perturbed(benchmark::State& s) { run_path(s, "perturbed", ApplyPath::factorized, "factorized"); }

void BM_sector(benchmark::State& state) {
  const int j = static_cast<int>(state.range(0));
  ProductSpace sp({2});
  auto g = make_grid(sp, 1.0, 64);
  auto op = make_operator(SymbolSpec::critical(sp, 0.8), PhaseSpec::halfwave(sp), g);
  auto f = random_input(g);
  const std::size_t count = direction_grid(2, j).size();
  SampledField out(g);
  for (auto _ : state) {
    for (std::size_t nu = 0; nu < count; ++nu) {
      out = evaluate(op, f, {{j}, {nu}, ApplyPath::multiplier, true});
      benchmark::DoNotOptimize(out);
    }
  }
  label(state, "sectors_multiplier_halfwave", 64, std::to_string(j), "all(" + std::to_string(count) + ")",
        checksum(out));
}

BENCHMARK(BM_direct_halfwave)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_factorized_halfwave)->Arg(16)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_multiplier_halfwave)->Arg(16)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_direct_perturbed)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_factorized_perturbed)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_sector)->Arg(1)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

class CsvReporter : public benchmark::ConsoleReporter {
 public:
  explicit CsvReporter(std::string path) : ConsoleReporter(OO_Tabular), path_(std::move(path)) {}

  void ReportRuns(const std::vector<Run>& runs) override {
    ConsoleReporter::ReportRuns(runs);
    for (const auto& r : runs) {
      if (r.run_type != Run::RT_Iteration) continue;
      std::string fields = r.report_label;
      for (auto& c : fields)
        if (c == '|') c = ',';
      double ns = r.GetAdjustedRealTime() * 1e6;  // reported in ms
      auto it = r.counters.find("checksum");
      rows_ += fields + "," + std::to_string(static_cast<long long>(ns)) + "," +
               (it == r.counters.end() ? std::string("") : std::to_string(it->second.value)) + "\n";
    }
  }

  void Finalize() override {
    ConsoleReporter::Finalize();
    std::ofstream out(path_);
    out << "op,grid,levels,sectors,wall_ns,checksum\n" << rows_;
  }

 private:
  std::string path_;
  std::string rows_;
};

}  // namespace

int main(int argc, char** argv) {
  std::string csv;
  std::vector<char*> args;
  for (int a = 0; a < argc; ++a) {
    if (std::strncmp(argv[a], "--csv=", 6) == 0) csv = argv[a] + 6;
    else args.push_back(argv[a]);
  }
  int n = static_cast<int>(args.size());
  benchmark::Initialize(&n, args.data());
  if (csv.empty()) {
    benchmark::RunSpecifiedBenchmarks();
  } else {
    CsvReporter reporter(csv);
    benchmark::RunSpecifiedBenchmarks(&reporter);
  }
  benchmark::Shutdown();
  return 0;
}
