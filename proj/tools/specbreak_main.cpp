// Command-line front end: analyze a curve dataset for covariance-spectrum
// and trace breaks, run the simulation study, or manage limit-quantile
// tables.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "specbreak/specbreak.hpp"

using json = nlohmann::ordered_json;
using namespace specbreak;

namespace {

// Exit codes: 0 ok, 2 usage, 3 i/o, 4 invalid data, 5 underdetermined fit,
// 6 degenerate spectrum, 7 singular long-run covariance, 1 anything else.
enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kInvalidData = 4,
  kUnderdetermined = 5,
  kDegenerate = 6,
  kSingular = 7,
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

KernelSpec parse_kernel(const std::string& name, const std::string& bandwidth) {
  KernelSpec spec;
  if (name == "bartlett")
    spec.kind = KernelKind::Bartlett;
  else if (name == "parzen")
    spec.kind = KernelKind::Parzen;
  else if (name == "flattop")
    spec.kind = KernelKind::FlatTop;
  else
    throw CLI::ValidationError("--kernel", "unknown kernel '" + name + "'");
  if (bandwidth != "auto") {
    try {
      spec.bandwidth = std::stod(bandwidth);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--bandwidth", "expected a real number or 'auto'");
    }
  }
  return spec;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

bool parse_double(const std::string& text, double& value) {
  const char* begin = text.c_str();
  char* end = nullptr;
  value = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  return end != begin && end && *end == '\0';
}

// Rows of comma-separated samples; a leading non-numeric row is treated as a
// header; rows may differ in length (grid mode fits per curve).
std::vector<std::vector<double>> read_csv_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool numeric = true;
    for (const std::string& cell : split(line, ',')) {
      double value;
      if (!parse_double(cell, value)) {
        numeric = false;
        break;
      }
      row.push_back(value);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw InvalidData("non-numeric cell in data row of " + path);
    }
    first = false;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidData("no data rows in " + path);
  return rows;
}

FunctionalSeries load_series(const std::string& path, const std::string& format, int basis_dim) {
  std::vector<std::vector<double>> rows = read_csv_rows(path);
  BasisSystem basis = fourier_basis(basis_dim);
  if (format == "coef") {
    Eigen::MatrixXd coeffs(rows.size(), basis_dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<int>(rows[i].size()) != basis_dim)
        throw InvalidData("coefficient row " + std::to_string(i + 1) + " has " +
                          std::to_string(rows[i].size()) + " columns, expected " +
                          std::to_string(basis_dim));
      for (int l = 0; l < basis_dim; ++l) coeffs(i, l) = rows[i][l];
    }
    return FunctionalSeries(std::move(coeffs), basis);
  }
  return smooth_to_basis(rows, basis);
}

json report_to_json(const TestReport& report) {
  json out;
  out["test"] = report.test;
  out["statistic"] = report.statistic;
  out["critical_value"] = report.critical_value;
  out["p_value"] = report.p_value;
  out["alpha"] = report.alpha;
  out["reject"] = report.reject;
  out["break_index"] = report.break_index;
  out["break_fraction"] = report.break_fraction;
  if (report.d > 0) out["d"] = report.d;
  if (report.delta > 0.0) out["delta"] = report.delta;
  out["kernel"] = report.kernel;
  out["bandwidth"] = report.bandwidth;
  out["limit_grid"] = report.limit_grid;
  out["limit_replications"] = report.limit_replications;
  out["limit_seed"] = report.limit_seed;
  out["diagnostics"] = report.diagnostics;
  return out;
}

// Per-segment spectrum summary in the layout of the pre/post-break
// eigenvalue table: lambda_j, PVE_j, TVE_j and the running trace.
json segment_table(const FunctionalSeries& series, int from, int count, int d) {
  Eigen::MatrixXd segment = series.coeffs().middleRows(from, count);
  Eigen::RowVectorXd mean = segment.colwise().mean();
  Eigen::MatrixXd centered = segment.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / count;
  CovarianceOperator op{(cov + cov.transpose()) / 2.0, 1.0};
  Eigen::VectorXd lambda = eigen_decompose(op, series.dimension()).eigenvalues;
  double total = lambda.sum();
  json rows = json::array();
  double running = 0.0;
  for (int j = 0; j < d && j < lambda.size(); ++j) {
    running += lambda(j);
    rows.push_back({{"j", j + 1},
                    {"lambda", lambda(j)},
                    {"pve", total > 0 ? lambda(j) / total : 0.0},
                    {"tve", total > 0 ? running / total : 0.0},
                    {"trace_j", running}});
  }
  json out;
  out["n"] = count;
  out["trace"] = total;
  out["rows"] = rows;
  return out;
}

std::string sidecar_path(const std::string& out_path, const std::string& suffix) {
  std::string stem = out_path;
  if (auto dot = stem.rfind(".json"); dot != std::string::npos && dot == stem.size() - 5)
    stem = stem.substr(0, dot);
  return stem + suffix;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write output file: " + path);
  out << content;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string input;
  std::string format = "grid";
  int basis_dim = 21;
  std::string mean_breaks;
  std::string d_mode = "auto";
  double tve = 0.85;
  double delta = 0.1;
  std::string kernel = "bartlett";
  std::string bandwidth = "auto";
  double alpha = 0.05;
  std::string mc_grid = "auto";  // auto = match the sample resolution
  int mc_reps = 10000;
  std::uint64_t seed = 1;
  std::string out = "report.json";
  std::string cache_dir = ".specbreak-cache";
  int threads = 0;
};

int parse_grid(const std::string& text) {
  if (text == "auto") return 0;
  return std::stoi(text);
}

int run_analyze(const AnalyzeArgs& args) {
  KernelSpec kernel = parse_kernel(args.kernel, args.bandwidth);
  FunctionalSeries raw = load_series(args.input, args.format, args.basis_dim);

  std::vector<int> breaks;
  if (!args.mean_breaks.empty())
    for (const std::string& cell : split(args.mean_breaks, ','))
      breaks.push_back(std::stoi(cell));
  FunctionalSeries series = center_and_segment_demean(raw, breaks);
  const int n = series.size();

  Eigen::VectorXd spectrum =
      eigen_decompose(partial_covariance(series, n), series.dimension()).eigenvalues;
  int d = 0;
  if (args.d_mode == "auto")
    d = tve_dimension(spectrum, args.tve);
  else
    d = std::stoi(args.d_mode);
  if (d < 1 || d > series.dimension())
    throw std::invalid_argument("selected d is outside 1..basis_dim");

  BreakStatistics core = compute_break_statistics(series, d, args.delta, kernel);
  TraceStatistics trace = compute_trace_statistics(series, kernel);

  QuantileStore store(args.cache_dir, args.threads);
  LimitDistSpec base;
  base.grid_points = parse_grid(args.mc_grid);
  base.replications = args.mc_reps;
  base.seed = args.seed;
  base = base.resolved_for(n);
  LimitDistSpec spec_j = base;
  spec_j.family = LimitFamily::Joint;
  spec_j.d = d;
  spec_j.delta = args.delta;
  LimitDistSpec spec_i = base;
  spec_i.family = LimitFamily::Individual;
  spec_i.delta = args.delta;
  LimitDistSpec spec_m = base;
  spec_m.family = LimitFamily::Trace;
  auto table_j = store.get(spec_j);
  auto table_i = store.get(spec_i);
  auto table_m = store.get(spec_m);

  std::vector<TestReport> reports;
  reports.push_back(build_report("joint", core.joint_stat, core.joint_k, n, args.alpha,
                                 *table_j, kernel, core.bandwidth, d, args.delta,
                                 core.diagnostics));
  for (int j = 1; j <= d; ++j) {
    Diagnostics diag = core.diagnostics;
    diag.push_back("statistic uses the sqrt(n)-scaled CUSUM normalization");
    reports.push_back(build_report("eigenvalue_" + std::to_string(j), core.indiv_stat(j - 1),
                                   core.indiv_k[j - 1], n, args.alpha, *table_i, kernel,
                                   core.bandwidth, d, args.delta, std::move(diag)));
  }
  {
    Diagnostics diag = trace.diagnostics;
    diag.push_back("statistic uses the sqrt(n)-scaled CUSUM normalization");
    reports.push_back(build_report("trace", trace.stat, trace.k, n, args.alpha, *table_m,
                                   kernel, trace.bandwidth, 0, 0.0, std::move(diag)));
  }

  // plot-ready CUSUM sidecars
  EigenProcess proc = eigenvalue_process(series, d, args.delta);
  Eigen::MatrixXd kappa = cusum_vector(proc);
  Eigen::MatrixXd sigma_inv = invert_lrv(core.sigma_d);
  std::ostringstream eig_csv;
  eig_csv << "k,x";
  for (int j = 1; j <= d; ++j) eig_csv << ",kappa_" << j;
  eig_csv << ",quadform\n";
  char buf[64];
  for (std::size_t r = 0; r < proc.grid.size(); ++r) {
    eig_csv << proc.grid[r];
    std::snprintf(buf, sizeof(buf), ",%.6f", static_cast<double>(proc.grid[r]) / n);
    eig_csv << buf;
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.8g", kappa(r, j));
      eig_csv << buf;
    }
    Eigen::VectorXd row = kappa.row(r).transpose();
    std::snprintf(buf, sizeof(buf), ",%.8g\n", row.dot(sigma_inv * row));
    eig_csv << buf;
  }
  TraceProcess trace_proc = trace_process(series);
  std::ostringstream trace_csv;
  trace_csv << "k,x,t_n,cusum\n";
  double t_one = trace_proc.values(n - 1);
  double sigma_t = std::sqrt(trace.sigma_t2);
  for (int k = 1; k <= n; ++k) {
    double x = static_cast<double>(k) / n;
    double cusum = std::sqrt(static_cast<double>(n)) *
                   std::abs(trace_proc.values(k - 1) - x * t_one) / sigma_t;
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.8g,%.8g\n", k, x, trace_proc.values(k - 1),
                  cusum);
    trace_csv << buf;
  }
  std::string eig_path = sidecar_path(args.out, "_eigen_cusum.csv");
  std::string trace_path = sidecar_path(args.out, "_trace_cusum.csv");
  write_text(eig_path, eig_csv.str());
  write_text(trace_path, trace_csv.str());

  json report;
  report["config"] = {{"input", args.input},
                      {"format", args.format},
                      {"basis_dim", args.basis_dim},
                      {"mean_breaks", breaks},
                      {"d_mode", args.d_mode},
                      {"tve", args.tve},
                      {"delta", args.delta},
                      {"kernel", args.kernel},
                      {"bandwidth", core.bandwidth},
                      {"alpha", args.alpha},
                      {"mc_grid", base.grid_points},
                      {"mc_grid_mode", args.mc_grid},
                      {"mc_reps", args.mc_reps},
                      {"seed", args.seed}};
  report["n"] = n;
  report["d_selected"] = d;
  report["spectrum"] = std::vector<double>(spectrum.data(), spectrum.data() + spectrum.size());
  report["tests"] = json::array();
  for (const TestReport& r : reports) report["tests"].push_back(report_to_json(r));

  // pre/post tables around the joint break date estimate
  int k_hat = core.joint_k;
  json break_table;
  break_table["break_index"] = k_hat;
  break_table["source"] = "joint";
  if (k_hat >= 2 && n - k_hat >= 2) {
    break_table["pre"] = segment_table(series, 0, k_hat, d);
    break_table["post"] = segment_table(series, k_hat, n - k_hat, d);
  } else {
    break_table["note"] = "break estimate too close to the boundary for segment tables";
  }
  report["break_table"] = break_table;
  report["eigen_cusum_csv"] = eig_path;
  report["trace_cusum_csv"] = trace_path;

  write_text(args.out, report.dump(2) + "\n");
  std::cout << "analyze: wrote " << args.out << " (d=" << d << ", n=" << n << ")\n";
  for (const TestReport& r : reports)
    std::cout << "  " << r.test << ": statistic=" << r.statistic << " p=" << r.p_value
              << (r.reject ? " [reject]" : "") << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed;
    for (char c : line) {
      if (c == '#') break;
      trimmed += c;
    }
    auto eq = trimmed.find('=');
    if (eq == std::string::npos) continue;
    auto strip = [](std::string s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(0, 1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
      return s;
    };
    std::string key = strip(trimmed.substr(0, eq));
    std::string value = strip(trimmed.substr(eq + 1));
    if (!key.empty()) out[key] = value;
  }
  return out;
}

ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("setting")) {
    if (*v == "null" || *v == "null-only")
      cfg.setting = Setting::NullOnly;
    else
      cfg.setting = static_cast<Setting>(std::stoi(*v));
  }
  if (auto v = get("decay")) cfg.decay = *v == "fast" ? Decay::Fast : Decay::Slow;
  if (auto v = get("dependence"))
    cfg.dependence = *v == "far1" ? Dependence::FAR1 : Dependence::IID;
  if (auto v = get("kappa")) cfg.kappa = std::stod(*v);
  if (auto v = get("n"))
    for (const std::string& cell : split(*v, ','))
      if (!cell.empty()) cfg.n_list.push_back(std::stoi(cell));
  if (auto v = get("b"))
    for (const std::string& cell : split(*v, ','))
      if (!cell.empty()) cfg.b_grid.push_back(std::stod(cell));
  if (auto v = get("tau")) cfg.tau = std::stod(*v);
  if (auto v = get("reps")) cfg.reps = std::stoi(*v);
  if (auto v = get("d")) cfg.d = std::stoi(*v);
  if (auto v = get("basis_dim")) cfg.dim = std::stoi(*v);
  if (auto v = get("delta")) cfg.delta = std::stod(*v);
  if (auto v = get("alpha")) cfg.alpha = std::stod(*v);
  if (auto v = get("bandwidth"); v && *v != "auto") cfg.kernel.bandwidth = std::stod(*v);
  if (auto v = get("kernel")) {
    KernelSpec parsed = parse_kernel(*v, "auto");
    cfg.kernel.kind = parsed.kind;
  }
  if (auto v = get("mc_grid")) cfg.limit_grid = parse_grid(*v);
  if (auto v = get("mc_reps")) cfg.limit_reps = std::stoi(*v);
  if (auto v = get("mc_seed")) cfg.limit_seed = std::stoull(*v);
  if (auto v = get("seed")) cfg.seed = std::stoull(*v);
  if (auto v = get("threads")) cfg.threads = std::stoi(*v);
  if (auto v = get("psi_norm"))
    cfg.psi_norm = *v == "frobenius" ? PsiNorm::Frobenius : PsiNorm::Operator;
  return cfg;
}

int run_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& cache_dir, int threads_override) {
  ExperimentConfig cfg = config_from_map(read_config(config_path));
  if (threads_override > 0) cfg.threads = threads_override;
  QuantileStore store(cache_dir, cfg.threads);
  std::vector<ExperimentRow> rows = run_experiment(cfg, &store);
  std::string csv = experiment_csv(rows);
  write_text(out_path, csv);
  std::cout << "simulate: wrote " << rows.size() << " rows to " << out_path << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int run_quantiles(const std::string& family, int d, double delta, const std::string& alphas,
                  int mc_grid, int mc_reps, std::uint64_t seed, const std::string& cache_dir,
                  int threads) {
  LimitDistSpec spec;
  if (family == "J")
    spec.family = LimitFamily::Joint;
  else if (family == "I")
    spec.family = LimitFamily::Individual;
  else if (family == "M")
    spec.family = LimitFamily::Trace;
  else
    throw CLI::ValidationError("--family", "expected J, I or M");
  spec.d = d;
  spec.delta = delta;
  spec.grid_points = mc_grid;
  spec.replications = mc_reps;
  spec.seed = seed;

  QuantileStore store(cache_dir, threads);
  bool from_cache = false;
  auto table = store.get(spec, &from_cache);
  std::cout << spec.key() << " (cache " << (from_cache ? "hit" : "miss") << ")\n";
  std::cout << "alpha,quantile\n";
  char buf[64];
  for (const std::string& cell : split(alphas, ',')) {
    double alpha = std::stod(cell);
    std::snprintf(buf, sizeof(buf), "%g,%.6f\n", alpha, table->quantile(alpha));
    std::cout << buf;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "structural break analysis for covariance spectra and traces of functional time series"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  CLI::App* cmd_analyze = app.add_subcommand("analyze", "test a curve dataset for breaks");
  cmd_analyze->add_option("--input", analyze.input, "input CSV path")->required();
  cmd_analyze->add_option("--format", analyze.format, "grid | coef")
      ->check(CLI::IsMember({"grid", "coef"}));
  cmd_analyze->add_option("--basis-dim", analyze.basis_dim, "Fourier basis size");
  cmd_analyze->add_option("--mean-breaks", analyze.mean_breaks,
                          "comma-separated mean break indices (1-based)");
  cmd_analyze->add_option("--d", analyze.d_mode, "'auto' (TVE) or a fixed dimension");
  cmd_analyze->add_option("--tve", analyze.tve, "TVE threshold for --d auto");
  cmd_analyze->add_option("--delta", analyze.delta, "trimming fraction");
  cmd_analyze->add_option("--kernel", analyze.kernel, "bartlett | parzen | flattop");
  cmd_analyze->add_option("--bandwidth", analyze.bandwidth, "'auto' or a real");
  cmd_analyze->add_option("--alpha", analyze.alpha, "test level");
  cmd_analyze->add_option("--mc-grid", analyze.mc_grid,
                          "limit-simulation grid points ('auto' matches the sample)");
  cmd_analyze->add_option("--mc-reps", analyze.mc_reps, "limit-simulation replications");
  cmd_analyze->add_option("--seed", analyze.seed, "limit-simulation seed");
  cmd_analyze->add_option("--out", analyze.out, "JSON report path");
  cmd_analyze->add_option("--cache-dir", analyze.cache_dir,
                          "quantile cache directory ('' disables)");
  cmd_analyze->add_option("--threads", analyze.threads, "worker threads (0 = auto)");

  std::string sim_config, sim_out = "experiment.csv", sim_cache = ".specbreak-cache";
  int sim_threads = 0;
  CLI::App* cmd_simulate = app.add_subcommand("simulate", "run a size/power experiment");
  cmd_simulate->add_option("--config", sim_config, "key=value config file")->required();
  cmd_simulate->add_option("--out", sim_out, "output CSV path");
  cmd_simulate->add_option("--cache-dir", sim_cache, "quantile cache directory ('' disables)");
  cmd_simulate->add_option("--threads", sim_threads, "override config threads");

  std::string q_family = "M", q_alphas = "0.05", q_cache = ".specbreak-cache";
  int q_d = 1, q_grid = 1000, q_reps = 10000, q_threads = 0;
  double q_delta = 0.1;
  std::uint64_t q_seed = 1;
  CLI::App* cmd_quantiles = app.add_subcommand("quantiles", "simulate/cache limit quantiles");
  cmd_quantiles->add_option("--family", q_family, "J | I | M");
  cmd_quantiles->add_option("--d", q_d, "dimension (family J)");
  cmd_quantiles->add_option("--delta", q_delta, "trimming fraction (families J, I)");
  cmd_quantiles->add_option("--alpha", q_alphas, "comma-separated levels");
  cmd_quantiles->add_option("--mc-grid", q_grid, "grid points");
  cmd_quantiles->add_option("--mc-reps", q_reps, "replications");
  cmd_quantiles->add_option("--seed", q_seed, "seed");
  cmd_quantiles->add_option("--cache-dir", q_cache, "cache directory ('' disables)");
  cmd_quantiles->add_option("--threads", q_threads, "worker threads (0 = auto)");

  try {
    app.parse(argc, argv);
    if (cmd_analyze->parsed()) return run_analyze(analyze);
    if (cmd_simulate->parsed()) return run_simulate(sim_config, sim_out, sim_cache, sim_threads);
    if (cmd_quantiles->parsed())
      return run_quantiles(q_family, q_d, q_delta, q_alphas, q_grid, q_reps, q_seed, q_cache,
                           q_threads);
    return kUsage;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const UnderdeterminedFit& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnderdetermined;
  } catch (const InvalidData& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidData;
  } catch (const DegenerateSpectrum& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDegenerate;
  } catch (const SingularLrv& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSingular;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
