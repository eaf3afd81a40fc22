// sntd: batch driver for sparse nonnegative Tucker decomposition.
//   run     — load or generate a problem, run one solver, write artifacts
//   compare — run two configs on the same problem, emit comparison tables
// Config files are flat key=value text (keys spelled like the long flags);
// command-line flags override file values. Exit codes: 0 success, 2 config
// error, 3 data error, 4 numerical abort.
#include "sntd/sntd.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace sntd;
namespace fs = std::filesystem;

struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

double parse_double(const std::string& v, const std::string& ctx) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ExitError(2, ctx + ": expected a number, got '" + v + "'");
  return x;
}

long long parse_ll(const std::string& v, const std::string& ctx) {
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ExitError(2, ctx + ": expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& v, const std::string& ctx) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ExitError(2, ctx + ": expected an unsigned integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& v, const std::string& ctx) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ExitError(2, ctx + ": expected a boolean, got '" + v + "'");
}

std::vector<index_t> parse_dims(const std::string& v, const std::string& ctx) {
  std::vector<index_t> dims;
  for (const std::string& p : split_commas(v)) {
    const long long d = parse_ll(p, ctx);
    if (d < 1) throw ExitError(2, ctx + ": dimensions must be >= 1");
    dims.push_back(static_cast<index_t>(d));
  }
  if (dims.empty()) throw ExitError(2, ctx + ": empty dimension list");
  return dims;
}

std::vector<double> parse_doubles(const std::string& v,
                                  const std::string& ctx) {
  std::vector<double> xs;
  for (const std::string& p : split_commas(v)) xs.push_back(parse_double(p, ctx));
  return xs;
}

EntryLaw parse_law(const std::string& v, const std::string& ctx) {
  if (v == "uniform01") return EntryLaw::UNIFORM01;
  if (v == "clipped-gaussian") return EntryLaw::CLIPPED_GAUSSIAN;
  if (v == "gaussian") return EntryLaw::GAUSSIAN;
  throw ExitError(2, ctx + ": unknown law '" + v +
                         "' (uniform01|clipped-gaussian|gaussian)");
}

const char* law_name(EntryLaw l) {
  switch (l) {
    case EntryLaw::UNIFORM01: return "uniform01";
    case EntryLaw::CLIPPED_GAUSSIAN: return "clipped-gaussian";
    case EntryLaw::GAUSSIAN: return "gaussian";
  }
  return "?";
}

// flat key=value lines; '#' starts a comment
std::vector<std::pair<std::string, std::string>> read_kv_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExitError(2, "cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ExitError(2, path + ":" + std::to_string(lineno) +
                             ": expected key=value");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

struct RunConfig {
  std::string tensor, mask, generate;
  std::string solver = "apg2";
  std::vector<index_t> core_dims;
  double tol = 1e-4;
  int max_iters = 500;
  double max_seconds = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  double lambda_core = 0.0;
  std::vector<double> lambda_factors;
  double mu = 0.0;
  bool signed_core = false;
  bool no_extrapolation = false;
  std::string out = ".";
};

void apply_run_kv(RunConfig& c, const std::string& key, const std::string& val,
                  const std::string& ctx) {
  if (key == "tensor") c.tensor = val;
  else if (key == "mask") c.mask = val;
  else if (key == "generate") c.generate = val;
  else if (key == "solver") c.solver = val;
  else if (key == "core-dims") c.core_dims = parse_dims(val, ctx);
  else if (key == "tol") c.tol = parse_double(val, ctx);
  else if (key == "max-iters") c.max_iters = static_cast<int>(parse_ll(val, ctx));
  else if (key == "max-seconds") c.max_seconds = parse_double(val, ctx);
  else if (key == "seed") c.seed = parse_u64(val, ctx);
  else if (key == "lambda-core") c.lambda_core = parse_double(val, ctx);
  else if (key == "lambda-factors") c.lambda_factors = parse_doubles(val, ctx);
  else if (key == "mu") c.mu = parse_double(val, ctx);
  else if (key == "signed-core") c.signed_core = parse_bool(val, ctx);
  else if (key == "no-extrapolation") c.no_extrapolation = parse_bool(val, ctx);
  else if (key == "out") c.out = val;
  else throw ExitError(2, ctx + ": unknown key '" + key + "'");
}

struct RecipeConfig {
  SynthRecipe rc;
  bool seed_given = false;
};

RecipeConfig load_recipe(const std::string& path) {
  RecipeConfig r;
  for (const auto& [key, val] : read_kv_file(path)) {
    const std::string ctx = path + ": " + key;
    if (key == "dims") r.rc.dims = parse_dims(val, ctx);
    else if (key == "core-dims") r.rc.core_dims = parse_dims(val, ctx);
    else if (key == "core-law") r.rc.core_law = parse_law(val, ctx);
    else if (key == "factor-law") r.rc.factor_law = parse_law(val, ctx);
    else if (key == "sparsify-core") r.rc.sparsify_core = parse_double(val, ctx);
    else if (key == "sparsify-factors")
      r.rc.sparsify_factors = parse_double(val, ctx);
    else if (key == "rescale-unit-max")
      r.rc.rescale_unit_max = parse_bool(val, ctx);
    else if (key == "normalize-columns")
      r.rc.normalize_columns = parse_bool(val, ctx);
    else if (key == "noise-snr") r.rc.noise_snr = parse_double(val, ctx);
    else if (key == "mask-sr") r.rc.mask_sr = parse_double(val, ctx);
    else if (key == "seed") { r.rc.seed = parse_u64(val, ctx); r.seed_given = true; }
    else throw ExitError(2, ctx + ": unknown key '" + key + "'");
  }
  if (r.rc.dims.empty() || r.rc.core_dims.empty())
    throw ExitError(2, path + ": dims and core-dims are required");
  return r;
}

std::string recipe_fingerprint(const SynthRecipe& rc) {
  std::ostringstream os;
  os << "dims=";
  for (index_t d : rc.dims) os << d << ",";
  os << ";core-dims=";
  for (index_t d : rc.core_dims) os << d << ",";
  os << ";core-law=" << law_name(rc.core_law)
     << ";factor-law=" << law_name(rc.factor_law)
     << ";sparsify-core=" << g17(rc.sparsify_core)
     << ";sparsify-factors=" << g17(rc.sparsify_factors)
     << ";rescale-unit-max=" << rc.rescale_unit_max
     << ";normalize-columns=" << rc.normalize_columns
     << ";noise-snr=" << (rc.noise_snr ? g17(*rc.noise_snr) : "none")
     << ";mask-sr=" << (rc.mask_sr ? g17(*rc.mask_sr) : "none")
     << ";seed=" << rc.seed;
  return os.str();
}

DenseTensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ExitError(3, "cannot open '" + path + "'");
  try {
    return read_tns(in);
  } catch (const TnsParseError& e) {
    throw ExitError(3, path + ": " + e.what());
  }
}

// one loaded/generated problem, exactly one member engaged
struct Job {
  std::optional<Problem> p;
  std::optional<MaskedProblem> mp;
  std::optional<HopcaProblem> hp;
};

std::vector<double> broadcast_lambdas(const std::vector<double>& lf, int order,
                                      const std::string& ctx) {
  if (lf.empty()) return {};
  for (double l : lf)
    if (l < 0.0) throw ExitError(2, ctx + ": lambdas must be >= 0");
  if (lf.size() == 1) return std::vector<double>(static_cast<size_t>(order), lf[0]);
  if (static_cast<int>(lf.size()) != order)
    throw ExitError(2, ctx + ": need one lambda per mode (or a single value)");
  return lf;
}

Job build_job(const RunConfig& c) {
  if (c.solver != "apg1" && c.solver != "apg2" && c.solver != "hopca")
    throw ExitError(2, "solver must be apg1, apg2, or hopca");
  if (c.tensor.empty() == c.generate.empty())
    throw ExitError(2, "exactly one of --tensor or --generate is required");
  if (!c.generate.empty() && !c.mask.empty())
    throw ExitError(2, "--mask cannot be combined with --generate "
                       "(put mask-sr in the recipe)");
  if (c.lambda_core < 0.0) throw ExitError(2, "lambda-core must be >= 0");
  if (!(c.tol > 0.0)) throw ExitError(2, "tol must be > 0");
  if (c.max_iters < 1) throw ExitError(2, "max-iters must be >= 1");
  if (!(c.max_seconds > 0.0)) throw ExitError(2, "max-seconds must be > 0");
  if (c.mu < 0.0) throw ExitError(2, "mu must be >= 0");

  Job job;
  try {
    if (!c.generate.empty()) {
      RecipeConfig r = load_recipe(c.generate);
      if (!r.seed_given) r.rc.seed = c.seed;
      if (!c.core_dims.empty() && c.core_dims != r.rc.core_dims)
        throw ExitError(2, "core-dims conflicts with the recipe's core-dims");
      SynthInstance inst = [&] {
        try {
          return generate(r.rc);
        } catch (const std::invalid_argument& e) {
          throw ExitError(2, c.generate + ": " + e.what());
        }
      }();
      Regularization reg;
      reg.lambda_core = c.lambda_core;
      reg.lambda_factor = broadcast_lambdas(
          c.lambda_factors, static_cast<int>(r.rc.dims.size()), "lambda-factors");
      reg.core_signed = c.signed_core;
      if (c.solver == "hopca") {
        if (inst.mask) throw ExitError(2, "hopca does not support masks");
        job.hp.emplace(to_hopca_problem(inst, std::move(reg), c.mu));
      } else if (inst.mask) {
        job.mp.emplace(to_masked_problem(inst, std::move(reg)));
      } else {
        job.p.emplace(to_problem(inst, std::move(reg)));
      }
    } else {
      if (c.core_dims.empty())
        throw ExitError(2, "core-dims is required with --tensor");
      DenseTensor data = load_tensor(c.tensor);
      Regularization reg;
      reg.lambda_core = c.lambda_core;
      reg.lambda_factor =
          broadcast_lambdas(c.lambda_factors, data.order(), "lambda-factors");
      reg.core_signed = c.signed_core;
      if (c.solver == "hopca") {
        if (!c.mask.empty()) throw ExitError(2, "hopca does not support masks");
        job.hp.emplace(std::move(data), c.core_dims, std::move(reg), c.mu);
      } else if (!c.mask.empty()) {
        DenseTensor mask = load_tensor(c.mask);
        job.mp.emplace(std::move(data), std::move(mask), c.core_dims,
                       std::move(reg));
      } else {
        job.p.emplace(std::move(data), c.core_dims, std::move(reg));
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ExitError(3, e.what());  // shape/validation failure on loaded data
  }
  return job;
}

SolveResult execute(const RunConfig& c) {
  Job job = build_job(c);
  SolverOptions opt;
  opt.variant = c.solver == "apg1" ? SolverVariant::APG_I : SolverVariant::APG_II;
  opt.tol = c.tol;
  opt.max_iters = c.max_iters;
  opt.max_seconds = c.max_seconds;
  opt.rng_seed = c.seed;
  opt.extrapolation =
      c.no_extrapolation ? Extrapolation::NONE : Extrapolation::FISTA;

  const std::vector<std::string>* warns = nullptr;
  if (job.p) warns = &job.p->warnings();
  if (job.mp) warns = &job.mp->problem().warnings();
  if (warns)
    for (const std::string& w : *warns) std::cerr << "warning: " << w << "\n";

  if (job.hp) return solve_hopca(*job.hp, init_hopca(*job.hp, c.seed), opt);
  if (job.mp) return solve_masked(*job.mp, init_hosvd(*job.mp, c.seed), opt);
  return solve(*job.p, init_hosvd(*job.p, c.seed), opt);
}

void write_trace_csv(const fs::path& path, const IterateTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ExitError(3, "cannot write '" + path.string() + "'");
  out << "iter,seconds,objective,datafit,relerr,redo,core_density,"
         "factor_density\n";
  for (const TraceRow& r : trace.rows)
    out << r.iter << ',' << g17(r.seconds) << ',' << g17(r.objective) << ','
        << g17(r.data_fit) << ',' << g17(r.rel_err) << ',' << r.redo << ','
        << g17(r.core_density) << ',' << g17(r.factor_density) << '\n';
  if (!out) throw ExitError(3, "error writing '" + path.string() + "'");
}

std::string summary_text(const RunConfig& c, const SolveResult& res) {
  const IterateTrace& tr = res.trace;
  std::ostringstream os;
  os << "solver: " << c.solver << "\n"
     << "iterations: " << tr.rows.size() << "\n"
     << "stop: " << to_string(tr.stop) << "\n"
     << "redo_total: " << tr.total_redo << "\n";
  if (!tr.rows.empty()) {
    const TraceRow& last = tr.rows.back();
    os << "seconds: " << g17(last.seconds) << "\n"
       << "objective: " << g17(last.objective) << "\n"
       << "datafit: " << g17(last.data_fit) << "\n"
       << "relerr: " << g17(last.rel_err) << "\n"
       << "core_density: " << g17(last.core_density) << "\n"
       << "factor_density: " << g17(last.factor_density) << "\n";
    if (!last.ortho_residual.empty()) {
      os << "ortho_residual:";
      for (double r : last.ortho_residual) os << ' ' << g17(r);
      os << "\n";
    }
  }
  return os.str();
}

void write_artifacts(const fs::path& dir, const RunConfig& c,
                     const SolveResult& res) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ExitError(3, "cannot create '" + dir.string() + "'");
  write_trace_csv(dir / "trace.csv", res.trace);
  try {
    write_tns((dir / "core.tns").string(), res.model.core());
    for (int n = 0; n < res.model.order(); ++n)
      write_tns((dir / ("factor_" + std::to_string(n + 1) + ".tns")).string(),
                res.model.factor(n));
    if (res.completion)
      write_tns((dir / "completion.tns").string(), *res.completion);
  } catch (const std::exception& e) {
    throw ExitError(3, e.what());
  }
  std::ofstream sum(dir / "summary.txt", std::ios::binary);
  if (!sum) throw ExitError(3, "cannot write summary.txt");
  sum << summary_text(c, res);
}

int do_run(const RunConfig& c) {
  SolveResult res = execute(c);
  write_artifacts(c.out, c, res);
  std::cout << summary_text(c, res);
  return 0;
}

// first iteration whose relerr reaches the run's own tol, or -1
int iters_to_tol(const IterateTrace& tr, double tol) {
  for (const TraceRow& r : tr.rows)
    if (r.rel_err <= tol) return r.iter;
  return -1;
}

int do_compare(const std::string& cfg_a, const std::string& cfg_b,
               const std::string& out_dir) {
  RunConfig a, b;
  for (const auto& [k, v] : read_kv_file(cfg_a)) apply_run_kv(a, k, v, cfg_a + ": " + k);
  for (const auto& [k, v] : read_kv_file(cfg_b)) apply_run_kv(b, k, v, cfg_b + ": " + k);

  // both runs must describe the same problem instance
  auto fingerprint = [](const RunConfig& c) -> std::string {
    if (!c.generate.empty()) {
      RecipeConfig r = load_recipe(c.generate);
      if (!r.seed_given) r.rc.seed = c.seed;
      return recipe_fingerprint(r.rc);
    }
    return "tensor=" + c.tensor + ";mask=" + c.mask;
  };
  if (fingerprint(a) != fingerprint(b))
    throw ExitError(2, "compare: the two configs must describe the same "
                       "problem (same data source and seed)");

  const fs::path root = out_dir;
  SolveResult ra = execute(a);  // sequential, for timing fairness
  SolveResult rb = execute(b);
  write_artifacts(root / "a", a, ra);
  write_artifacts(root / "b", b, rb);

  const auto& rows_a = ra.trace.rows;
  const auto& rows_b = rb.trace.rows;
  {
    std::ofstream out(root / "relerr_vs_iter.csv", std::ios::binary);
    if (!out) throw ExitError(3, "cannot write relerr_vs_iter.csv");
    out << "iter,relerr_a,relerr_b\n";
    const size_t n = std::max(rows_a.size(), rows_b.size());
    for (size_t i = 0; i < n; ++i) {
      out << (i + 1) << ',';
      if (i < rows_a.size()) out << g17(rows_a[i].rel_err);
      out << ',';
      if (i < rows_b.size()) out << g17(rows_b[i].rel_err);
      out << '\n';
    }
  }
  {
    std::ofstream out(root / "relerr_vs_seconds.csv", std::ios::binary);
    if (!out) throw ExitError(3, "cannot write relerr_vs_seconds.csv");
    out << "run,seconds,relerr\n";
    for (const TraceRow& r : rows_a)
      out << "a," << g17(r.seconds) << ',' << g17(r.rel_err) << '\n';
    for (const TraceRow& r : rows_b)
      out << "b," << g17(r.seconds) << ',' << g17(r.rel_err) << '\n';
  }

  auto report = [](const char* label, const RunConfig& c, const SolveResult& r) {
    std::cout << "run " << label << ": solver=" << c.solver
              << " iterations=" << r.trace.rows.size()
              << " relerr=" << (r.trace.rows.empty()
                                    ? "-"
                                    : g17(r.trace.rows.back().rel_err))
              << " iters_to_tol=";
    const int k = iters_to_tol(r.trace, c.tol);
    if (k < 0) std::cout << "-";
    else std::cout << k;
    std::cout << "\n";
  };
  report("a", a, ra);
  report("b", b, rb);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse nonnegative Tucker decomposition"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run one solver, write artifacts");
  std::string run_config;
  run_cmd->add_option("config", run_config, "key=value config file");
  std::string v_tensor, v_mask, v_generate, v_solver, v_out, v_core_dims,
      v_lambda_factors;
  double v_tol = 0, v_max_seconds = 0, v_lambda_core = 0, v_mu = 0;
  int v_max_iters = 0;
  std::uint64_t v_seed = 0;
  auto* o_tensor = run_cmd->add_option("--tensor", v_tensor, "TNS1 data tensor");
  auto* o_mask = run_cmd->add_option("--mask", v_mask, "TNS1 0/1 mask");
  auto* o_generate =
      run_cmd->add_option("--generate", v_generate, "synthetic recipe file");
  auto* o_solver =
      run_cmd->add_option("--solver", v_solver, "apg1 | apg2 | hopca");
  auto* o_core_dims =
      run_cmd->add_option("--core-dims", v_core_dims, "core dims, e.g. 3,3,3");
  auto* o_tol = run_cmd->add_option("--tol", v_tol, "relative-error tolerance");
  auto* o_max_iters =
      run_cmd->add_option("--max-iters", v_max_iters, "iteration budget");
  auto* o_max_seconds =
      run_cmd->add_option("--max-seconds", v_max_seconds, "time budget");
  auto* o_seed = run_cmd->add_option("--seed", v_seed, "rng seed");
  auto* o_lambda_core =
      run_cmd->add_option("--lambda-core", v_lambda_core, "core l1 weight");
  auto* o_lambda_factors = run_cmd->add_option(
      "--lambda-factors", v_lambda_factors, "factor l1 weights a,b,c");
  auto* o_mu = run_cmd->add_option("--mu", v_mu, "orthogonality weight (hopca)");
  auto* o_signed_core =
      run_cmd->add_flag("--signed-core", "drop the core >= 0 constraint");
  auto* o_no_extrap =
      run_cmd->add_flag("--no-extrapolation", "disable extrapolation");
  auto* o_out = run_cmd->add_option("--out", v_out, "output directory");

  auto* cmp_cmd = app.add_subcommand(
      "compare", "run two configs on one problem, emit comparison tables");
  std::string cmp_a, cmp_b, cmp_out = ".";
  cmp_cmd->add_option("config_a", cmp_a, "first run config")->required();
  cmp_cmd->add_option("config_b", cmp_b, "second run config")->required();
  cmp_cmd->add_option("--out", cmp_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) {
      RunConfig cfg;
      if (!run_config.empty())
        for (const auto& [k, v] : read_kv_file(run_config))
          apply_run_kv(cfg, k, v, run_config + ": " + k);
      if (o_tensor->count()) cfg.tensor = v_tensor;
      if (o_mask->count()) cfg.mask = v_mask;
      if (o_generate->count()) cfg.generate = v_generate;
      if (o_solver->count()) cfg.solver = v_solver;
      if (o_core_dims->count())
        cfg.core_dims = parse_dims(v_core_dims, "--core-dims");
      if (o_tol->count()) cfg.tol = v_tol;
      if (o_max_iters->count()) cfg.max_iters = v_max_iters;
      if (o_max_seconds->count()) cfg.max_seconds = v_max_seconds;
      if (o_seed->count()) cfg.seed = v_seed;
      if (o_lambda_core->count()) cfg.lambda_core = v_lambda_core;
      if (o_lambda_factors->count())
        cfg.lambda_factors = parse_doubles(v_lambda_factors, "--lambda-factors");
      if (o_mu->count()) cfg.mu = v_mu;
      if (o_signed_core->count()) cfg.signed_core = true;
      if (o_no_extrap->count()) cfg.no_extrapolation = true;
      if (o_out->count()) cfg.out = v_out;
      return do_run(cfg);
    }
    return do_compare(cmp_a, cmp_b, cmp_out);
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const TnsParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
