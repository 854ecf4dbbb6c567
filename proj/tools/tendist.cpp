#include <iostream>

#include <CLI11.hpp>

#include "tendist/cli.hpp"

namespace {

void add_common(CLI::App* app, tendist::RunConfig& c) {
  app->add_option("--kernel", c.kernel, "named kernel: gemm, ttv, ttm, innerprod, mttkrp");
  app->add_option("--expr", c.expr, "inline statement, e.g. \"A(i,j) = B(i,k) * C(k,j)\"");
  app->add_option("--machine,--grid", c.machine, "machine grid, e.g. 3x3 or 2x2/4");
  app->add_option("--dist", c.dists, "tensor distribution, e.g. \"A: xy -> xy\" (repeatable)");
  app->add_option("--algorithm", c.algorithm, "named algorithm bundle");
  app->add_option("--schedule", c.schedule_path, "scheduling script, one command per line")->check(CLI::ExistingFile);
  app->add_option("--n", c.n, "extent of every index variable");
  app->add_option("--dims", c.dims, "per-variable extents, e.g. i=4,j=5,k=6");
  app->add_option("--chunk", c.chunk, "chunk size or number of chunks for bundles that split k");
  app->add_option("--cosma-par", [&c](const std::vector<std::string>& v) {
    c.params.cosma.par_i = std::stoll(v.at(0));
    c.params.cosma.par_j = std::stoll(v.at(1));
    c.params.cosma.par_k = std::stoll(v.at(2));
    return true;
  }, "parallel factors for i j k")->expected(3);
  app->add_option("--cosma-seq", [&c](const std::vector<std::string>& v) {
    c.params.cosma.seq_i = std::stoll(v.at(0));
    c.params.cosma.seq_j = std::stoll(v.at(1));
    c.params.cosma.seq_k = std::stoll(v.at(2));
    return true;
  }, "sequential factors for i j k")->expected(3);
  app->add_flag("--rotate-b", c.params.rotate_b, "pumma: rotate B instead of C");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed tensor algebra compiler and simulator"};
  app.require_subcommand(1);
  tendist::RunConfig run_cfg, explain_cfg;
  bool also_explain = false;

  CLI::App* run = app.add_subcommand("run", "simulate a distributed kernel");
  add_common(run, run_cfg);
  run->add_option("--seed", run_cfg.seed, "input generator seed");
  run->add_flag("--verify", run_cfg.verify, "compare against the sequential evaluator");
  run->add_option("--stats", run_cfg.stats_path, "stats JSON path");
  run->add_option("--dump-trace", run_cfg.trace_path, "write one line per communication event");
  run->add_option("--workers", run_cfg.workers, "simulator threads (default TENDIST_WORKERS or 1)");
  run->add_flag("--explain", also_explain, "print the lowering pipeline before running");

  CLI::App* expl = app.add_subcommand("explain", "print placement and compute statements");
  add_common(expl, explain_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*expl) {
    try {
      std::cout << tendist::explain(explain_cfg);
      return 0;
    } catch (const tendist::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }
  if (also_explain) {
    try {
      std::cout << tendist::explain(run_cfg);
    } catch (const tendist::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }
  return tendist::run(run_cfg, std::cout, std::cerr);
}
