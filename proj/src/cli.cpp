#include "tendist/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>

#include "tendist/kernels.hpp"

namespace tendist {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> expr_vars(const std::string& expr) {
  std::vector<std::string> out;
  std::regex group(R"(\(([^()]*)\))");
  for (auto it = std::sregex_iterator(expr.begin(), expr.end(), group); it != std::sregex_iterator(); ++it) {
    std::stringstream ss((*it)[1].str());
    std::string v;
    while (std::getline(ss, v, ',')) {
      v.erase(0, v.find_first_not_of(" \t"));
      v.erase(v.find_last_not_of(" \t") + 1);
      if (!v.empty() && std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
  }
  return out;
}

Extents parse_dims(const std::string& text) {
  Extents out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, "--dims entries look like i=4, got '" + item + "'");
    try {
      out[item.substr(0, eq)] = std::stoll(item.substr(eq + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::ConfigError, "bad extent in '" + item + "'");
    }
  }
  return out;
}

Extents extents_for(const RunConfig& c, const std::vector<std::string>& vars) {
  Extents e;
  int64_t n = c.n.value_or(6);
  for (const std::string& v : vars) e[v] = n;
  if (!c.dims.empty()) {
    for (const auto& [v, x] : parse_dims(c.dims)) {
      if (!e.count(v)) fail(ErrorCode::ConfigError, "--dims names unknown variable " + v);
      e[v] = x;
    }
  }
  for (const auto& [v, x] : e) {
    if (x < 1) fail(ErrorCode::ConfigError, "extent of " + v + " must be positive");
  }
  return e;
}

std::map<std::string, DistributionSpec> parse_dist_flags(const RunConfig& c) {
  std::map<std::string, DistributionSpec> out;
  for (const std::string& d : c.dists) {
    DistributionSpec s = parse_distribution(d);
    out[s.tensor] = s;
  }
  return out;
}

int workers_for(const RunConfig& c) {
  if (c.workers > 0) return c.workers;
  if (const char* env = std::getenv("TENDIST_WORKERS")) {
    try {
      int w = std::stoi(env);
      if (w > 0) return w;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::ConfigError, std::string("TENDIST_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

nlohmann::json totals_json(const Totals& t) {
  return {{"messages", t.messages}, {"elements", t.elements}, {"copies", t.copies}, {"reduces", t.reduces}};
}

std::string timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream ss;
  ss << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

}  // namespace

ResolvedRun resolve(const RunConfig& c) {
  if (c.machine.empty()) fail(ErrorCode::ConfigError, "--machine is required");
  bool has_schedule = !c.schedule_path.empty() || c.schedule_text.has_value();
  if (c.algorithm.empty() == !has_schedule) {
    fail(ErrorCode::ConfigError, "give exactly one of --algorithm and --schedule");
  }
  if (!c.kernel.empty() && !c.expr.empty()) fail(ErrorCode::ConfigError, "give --kernel or --expr, not both");
  Machine m = Machine::parse(c.machine);

  std::optional<AlgorithmBundle> bundle;
  if (!c.algorithm.empty()) {
    AlgorithmParams p = c.params;
    p.chunk = c.chunk;
    bundle = make_algorithm(c.algorithm, m, p);
    if (!c.expr.empty()) fail(ErrorCode::ConfigError, "--expr cannot be combined with --algorithm");
    if (!c.kernel.empty() && c.kernel != bundle->kernel) {
      fail(ErrorCode::ConfigError, c.algorithm + " computes " + bundle->kernel + ", not " + c.kernel);
    }
  }

  Extents extents;
  auto stmt = [&] {
    if (!c.expr.empty()) {
      extents = extents_for(c, expr_vars(c.expr));
      return parse_statement(c.expr, extents);
    }
    std::string kernel = bundle ? bundle->kernel : c.kernel;
    if (kernel.empty()) fail(ErrorCode::ConfigError, "--kernel or --expr is required");
    const auto names = kernel_names();
    if (std::find(names.begin(), names.end(), kernel) == names.end()) {
      fail(ErrorCode::ConfigError, "unknown kernel '" + kernel + "'");
    }
    extents = extents_for(c, kernel_vars(kernel));
    return make_kernel(kernel, extents);
  }();
  ResolvedRun r{m, std::move(stmt), std::move(extents), {}, {}, bundle};

  std::map<std::string, DistributionSpec> specs;
  if (bundle) {
    for (const auto& [t, text] : bundle->distributions) specs[t] = parse_distribution(t + ": " + text);
  }
  for (auto& [t, s] : parse_dist_flags(c)) specs[t] = s;
  for (const TensorVar& t : r.stmt.tensors()) {
    auto it = specs.find(t.name);
    if (it == specs.end()) fail(ErrorCode::MissingDistribution, "no distribution for " + t.name + "; pass --dist");
    TensorDistribution d(t, m, it->second);
    validate(d);
    r.distributions.emplace(t.name, std::move(d));
  }
  for (const auto& [t, s] : specs) {
    if (!r.distributions.count(t)) fail(ErrorCode::ConfigError, "--dist names unknown tensor " + t);
  }

  if (bundle) {
    r.schedule = bundle->schedule;
  } else {
    r.schedule = Schedule::parse(c.schedule_text ? *c.schedule_text : read_file(c.schedule_path));
  }
  return r;
}

std::string explain(const RunConfig& c) {
  std::ostringstream out;
  bool compute = !c.kernel.empty() || !c.expr.empty() || !c.algorithm.empty();
  if (!compute) {
    if (c.machine.empty()) fail(ErrorCode::ConfigError, "--machine is required");
    if (c.dists.empty()) fail(ErrorCode::ConfigError, "nothing to explain; pass --kernel, --algorithm or --dist");
    Machine m = Machine::parse(c.machine);
    for (const auto& [name, spec] : parse_dist_flags(c)) {
      std::size_t order = spec.levels.empty() ? 0 : spec.levels.front().x.size();
      TensorVar t{name, std::vector<int64_t>(order, c.n.value_or(6))};
      TensorDistribution d(t, m, spec);
      validate(d);
      out << "# placement " << name << "\n" << to_string(lower_placement(d)) << "\n";
    }
    return out.str();
  }
  RunConfig relaxed = c;
  if (c.algorithm.empty() && c.schedule_path.empty() && !c.schedule_text) relaxed.schedule_text = "";
  ResolvedRun r = resolve(relaxed);
  for (const auto& [name, d] : r.distributions) {
    out << "# placement " << name << "\n" << to_string(lower_placement(d)) << "\n";
  }
  CinStmt s = lower_to_cin(r.stmt);
  out << "# lowered\n" << to_string(s) << "\n";
  for (const auto& [text, stmt] : r.schedule.explain(s)) out << "# " << text << "\n" << to_string(stmt) << "\n";
  return out.str();
}

nlohmann::json stats_json(const RunConfig& c, const ResolvedRun& r, const SimStats& s) {
  nlohmann::json dists = nlohmann::json::object();
  for (const auto& [name, d] : r.distributions) dists[name] = d.to_string();
  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& cmd : r.schedule.commands()) schedule.push_back(cmd.text);
  nlohmann::json j;
  j["schema"] = 1;
  j["timestamp"] = timestamp();
  j["config"] = {{"statement", to_string(r.stmt)},
                 {"machine", r.machine.to_string()},
                 {"algorithm", c.algorithm},
                 {"schedule", schedule},
                 {"distributions", dists},
                 {"extents", r.extents},
                 {"seed", c.seed}};
  j["totals"] = totals_json(s.compute);
  j["placement_totals"] = totals_json(s.placement);
  std::vector<ProcCoord> procs = r.machine.enumerate();
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [key, e] : s.per_edge) {
    edges.push_back({{"src", format_coord(procs[key.first])},
                     {"dst", format_coord(procs[key.second])},
                     {"messages", e.messages},
                     {"elements", e.elements}});
  }
  j["per_edge"] = edges;
  nlohmann::json steps = nlohmann::json::array();
  for (const Totals& t : s.per_step) steps.push_back(totals_json(t));
  j["per_step"] = steps;
  j["memory_high_water"] = s.memory_high_water;
  return j;
}

nlohmann::json without_timestamp(nlohmann::json j) {
  j.erase("timestamp");
  return j;
}

int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    ResolvedRun r = resolve(c);
    CinStmt compute = r.schedule.apply(lower_to_cin(r.stmt));
    TensorMap inputs = random_inputs(r.stmt, c.seed);
    SimOptions opts;
    opts.workers = workers_for(c);
    opts.record_slots = false;
    SimResult result = simulate(compute, r.distributions, inputs, opts);
    SimStats s = stats(result.trace);

    nlohmann::json j = stats_json(c, r, s);
    int status = 0;
    if (c.verify) {
      const std::string& lhs = r.stmt.lhs.tensor.name;
      DenseTensor expected = sequential_evaluate(r.stmt, inputs);
      double diff = max_abs_diff(result.outputs.at(lhs), expected);
      bool ok = bit_equal(result.outputs.at(lhs), expected);
      j["verify"] = {{"pass", ok}, {"max_abs_diff", diff}};
      out << (ok ? "PASS" : "FAIL") << " max_abs_diff=" << diff << "\n";
      if (!ok) status = 1;
      if (r.bundle) {
        auto bad = r.bundle->signature(result.trace);
        j["signature"] = bad ? *bad : "ok";
        out << "signature " << (bad ? "FAIL: " + *bad : "ok") << "\n";
        if (bad) status = 1;
      }
    }
    out << "compute messages=" << s.compute.messages << " elements=" << s.compute.elements
        << " copies=" << s.compute.copies << " reduces=" << s.compute.reduces << "\n";

    if (!c.stats_path.empty()) {
      std::ofstream f(c.stats_path);
      if (!f) fail(ErrorCode::IoError, "cannot write " + c.stats_path);
      f << j.dump(2) << "\n";
    }
    if (!c.trace_path.empty()) {
      std::ofstream f(c.trace_path);
      if (!f) fail(ErrorCode::IoError, "cannot write " + c.trace_path);
      for (const CommEvent& e : result.trace.events) f << to_string(e) << "\n";
    }
    return status;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace tendist
