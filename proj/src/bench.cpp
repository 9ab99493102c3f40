#include "ddlasso/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "ddlasso/csv.hpp"
#include "ddlasso/error.hpp"
#include "ddlasso/rng.hpp"

namespace ddlasso::bench {

using inference::DdlConfig;
using inference::InitialFit;
using inference::ProjectionDirection;
using inference::TransformSpec;

std::string to_string(Method m) {
  switch (m) {
    case Method::DDL: return "ddl";
    case Method::DebiasedLasso: return "debiased_lasso";
    case Method::SharedInit: return "shared_init";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "ddl") return Method::DDL;
  if (s == "debiased_lasso") return Method::DebiasedLasso;
  if (s == "shared_init") return Method::SharedInit;
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + s + "'");
}

DdlConfig method_config(Method m, const DdlConfig& base) {
  DdlConfig c = base;
  switch (m) {
    case Method::DDL: break;
    case Method::DebiasedLasso:
      c.initial = TransformSpec::identity();
      c.nuisance = TransformSpec::identity();
      break;
    case Method::SharedInit: c.nuisance = TransformSpec::identity(); break;
  }
  return c;
}

BiasTerms scaled_bias_terms(const Eigen::Ref<const MatrixXd>& X, Index j, const ProjectionDirection& proj,
                            const Eigen::Ref<const VectorXd>& beta_init, const Eigen::Ref<const VectorXd>& beta,
                            const Eigen::Ref<const VectorXd>& b, double sigma_e2, const std::optional<VectorXd>& noise) {
  if (j < 0 || j >= X.cols()) throw Error(ErrorKind::IndexOutOfRange, "target index outside [0, p)");
  if (beta_init.size() != X.cols() || beta.size() != X.cols() || b.size() != X.cols())
    throw Error(ErrorKind::DimensionMismatch, "coefficient vectors must have length p");
  const double den = proj.denominator(X.col(j));
  const double kernel = proj.variance_kernel();
  if (!(std::abs(den) > 0.0) || !(kernel > 0.0) || !(sigma_e2 > 0.0))
    throw Error(ErrorKind::DegenerateDenominator, "scaled bias terms need nonzero denominator and variance");

  BiasTerms out;
  out.V = sigma_e2 * kernel / (den * den);
  const double scale = std::sqrt(kernel * sigma_e2);
  // X_{-j} (beta_init - beta)_{-j}
  VectorXd diff = beta_init - beta;
  diff(j) = 0.0;
  out.B_beta = proj.P2Zj.dot(X * diff) / scale;
  out.B_b = proj.P2Zj.dot(X * b) / scale;
  if (noise) out.noise_term = proj.P2Zj.dot(*noise) / den;
  // V^{-1/2} / den = sign(den) / scale. With B_beta defined on
  // (beta_init - beta) the error decomposes as
  // beta_hat - beta = noise_term - sqrt(V) B_beta + sqrt(V) B_b.
  if (den < 0.0) {
    out.B_beta = -out.B_beta;
    out.B_b = -out.B_b;
  }
  return out;
}

std::uint64_t replication_seed(std::uint64_t master_seed, Index rep) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(rep)});
}

namespace {

struct InitialEntry {
  TransformSpec spec;
  std::optional<InitialFit> fit;
  double sigma_e2_hat = 0.0;
  std::string error;
};

struct DirectionEntry {
  TransformSpec spec;
  std::optional<ProjectionDirection> direction;
  std::string error;
};

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& s : parts) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

ReplicationRecord failed_record(ReplicationRecord r, const std::string& why) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.ok = false;
  r.beta_hat = r.V = r.ci_low = r.ci_high = r.B_beta = r.B_b = r.V_true = nan;
  r.decomposition_residual = nan;
  r.covered = false;
  if (!r.flags.empty()) r.flags += "; ";
  r.flags += why;
  return r;
}

}  // namespace

std::vector<ReplicationRecord> run_replication(const simgen::Generator& gen, const DdlConfig& config,
                                               std::span<const Method> methods, Index target, std::uint64_t seed,
                                               Index rep) {
  const simgen::Dataset data = gen.sample(derive_seed(seed, {1}));
  DdlConfig base = config;
  base.tuning.seed = derive_seed(seed, {2});
  base.validate();

  const simgen::Truth& truth = data.truth;
  if (target < 0 || target >= data.X.cols()) throw Error(ErrorKind::IndexOutOfRange, "target outside [0, p)");

  const MatrixXd X = base.center ? inference::center_columns(data.X) : data.X;
  const VectorXd Y = base.center ? inference::center(data.Y) : data.Y;
  VectorXd noise = truth.e + truth.delta;
  if (base.center) noise = inference::center(noise);

  std::vector<InitialEntry> initials;
  std::vector<DirectionEntry> directions;

  auto initial_for = [&](const TransformSpec& spec, const DdlConfig& cfg) -> InitialEntry& {
    for (auto& e : initials)
      if (e.spec == spec) return e;
    InitialEntry e;
    e.spec = spec;
    try {
      e.fit = inference::initial_estimator(X, Y, cfg);
      e.sigma_e2_hat = inference::noise_level(X, Y, e.fit->fit.coef, e.fit->Q);
    } catch (const Error& err) {
      e.fit.reset();
      e.error = err.what();
    }
    initials.push_back(std::move(e));
    return initials.back();
  };
  auto direction_for = [&](const TransformSpec& spec, const DdlConfig& cfg) -> DirectionEntry& {
    for (auto& e : directions)
      if (e.spec == spec) return e;
    DirectionEntry e;
    e.spec = spec;
    try {
      e.direction = inference::projection_direction(X, target, cfg);
    } catch (const Error& err) {
      e.error = err.what();
    }
    directions.push_back(std::move(e));
    return directions.back();
  };

  std::vector<ReplicationRecord> out;
  for (Method m : methods) {
    const DdlConfig cfg = method_config(m, base);
    ReplicationRecord r;
    r.rep = rep;
    r.seed = seed;
    r.method = m;
    r.beta_true = truth.beta(target);
    r.sigma_j = truth.sigma_j(target);

    const InitialEntry& init = initial_for(cfg.initial, cfg);
    const DirectionEntry& dir = direction_for(cfg.nuisance, cfg);
    if (!init.fit) {
      out.push_back(failed_record(r, init.error));
      continue;
    }
    r.sigma_e2_hat = init.sigma_e2_hat;
    r.lambda = init.fit->lambda;
    r.init_l2_error = (init.fit->fit.coef - truth.beta).norm();
    if (!dir.direction) {
      out.push_back(failed_record(r, dir.error));
      continue;
    }
    const auto res = inference::assemble(X, Y, target, *init.fit, init.sigma_e2_hat, *dir.direction, cfg.alpha);
    r.lambda_j = res.lambda_j;
    r.flags = join(res.flags);
    if (!res.ok) {
      out.push_back(failed_record(r, "estimate failed"));
      continue;
    }
    r.beta_hat = res.beta_hat;
    r.V = res.variance;
    r.ci_low = res.ci_low;
    r.ci_high = res.ci_high;
    r.covered = r.ci_low <= r.beta_true && r.beta_true <= r.ci_high;
    try {
      const auto bias = scaled_bias_terms(X, target, *dir.direction, init.fit->fit.coef, truth.beta, truth.b,
                                          truth.sigma_e2, noise);
      r.B_beta = bias.B_beta;
      r.B_b = bias.B_b;
      r.V_true = bias.V;
      const double sd = std::sqrt(bias.V);
      r.decomposition_residual = (r.beta_hat - r.beta_true) - (bias.noise_term - sd * r.B_beta + sd * r.B_b);
    } catch (const Error& err) {
      out.push_back(failed_record(r, err.what()));
      continue;
    }
    out.push_back(std::move(r));
  }
  return out;
}

ReplicationRecord run_replication(const simgen::Scenario& scenario, Method method, const DdlConfig& config,
                                  std::uint64_t seed, Index target) {
  const simgen::Generator gen(scenario);
  const Method methods[] = {method};
  return run_replication(gen, config, methods, target, seed, 0).front();
}

CellSummary summarize(const Cell& cell, Method method, std::span<const ReplicationRecord> records) {
  CellSummary s;
  s.axis = cell.axis;
  s.axis_value = cell.axis_value;
  s.method = method;
  double covered = 0.0;
  for (const auto& r : records) {
    if (r.method != method) continue;
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    ++s.replications;
    covered += r.covered ? 1.0 : 0.0;
    s.mean_abs_B_beta += std::abs(r.B_beta);
    s.mean_abs_B_b += std::abs(r.B_b);
    s.mean_sqrt_V += std::sqrt(r.V);
    s.mean_sigma_e2_hat += r.sigma_e2_hat;
  }
  if (s.replications > 0) {
    const double k = static_cast<double>(s.replications);
    s.coverage = covered / k;
    s.mean_abs_B_beta /= k;
    s.mean_abs_B_b /= k;
    s.mean_sqrt_V /= k;
    s.mean_sigma_e2_hat /= k;
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.coverage = s.mean_abs_B_beta = s.mean_abs_B_b = s.mean_sqrt_V = s.mean_sigma_e2_hat = nan;
  }
  return s;
}

MonteCarloReport run_grid(std::span<const Cell> cells, std::uint64_t master_seed, int workers) {
  std::vector<simgen::Generator> gens;
  gens.reserve(cells.size());
  std::vector<std::pair<std::size_t, Index>> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c].reps < 1) throw Error(ErrorKind::InvalidArgument, "each cell needs at least one replication");
    cells[c].config.validate();
    gens.emplace_back(cells[c].scenario);
    for (Index r = 0; r < cells[c].reps; ++r) tasks.emplace_back(c, r);
  }

  std::vector<std::vector<ReplicationRecord>> slots(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      const auto [c, r] = tasks[t];
      const Cell& cell = cells[c];
      slots[t] = run_replication(gens[c], cell.config, cell.methods, cell.target, replication_seed(master_seed, r), r);
    }
  };

  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          work();
        } catch (...) {
          errors[w] = std::current_exception();
          next = tasks.size();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  MonteCarloReport report;
  std::size_t t = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellRecords cr;
    cr.cell = static_cast<Index>(c);
    for (Index r = 0; r < cells[c].reps; ++r, ++t)
      cr.records.insert(cr.records.end(), slots[t].begin(), slots[t].end());
    for (Method m : cells[c].methods) report.summaries.push_back(summarize(cells[c], m, cr.records));
    report.cells.push_back(std::move(cr));
  }
  return report;
}

void write_report_csv(const MonteCarloReport& report, std::ostream& out) {
  using csv::format_number;
  csv::write_row(out, {"scenario_axis", "axis_value", "method", "metric", "value"});
  for (const auto& s : report.summaries) {
    const std::pair<const char*, double> metrics[] = {
        {"coverage", s.coverage},
        {"mean_abs_B_beta", s.mean_abs_B_beta},
        {"mean_abs_B_b", s.mean_abs_B_b},
        {"mean_sqrt_V", s.mean_sqrt_V},
        {"mean_sigma_e2_hat", s.mean_sigma_e2_hat},
        {"replications", static_cast<double>(s.replications)},
        {"failures", static_cast<double>(s.failures)},
    };
    for (const auto& [name, value] : metrics)
      csv::write_row(out, {s.axis, format_number(s.axis_value), to_string(s.method), name, format_number(value)});
  }
}

void write_records_csv(std::span<const Cell> cells, const MonteCarloReport& report, std::ostream& out) {
  using csv::format_number;
  csv::write_row(out, {"cell", "scenario_axis", "axis_value", "rep", "seed", "method", "beta_true", "beta_hat", "V",
                       "ci_low", "ci_high", "covered", "B_beta", "B_b", "V_true", "sigma_e2_hat", "sigma_j",
                       "lambda", "lambda_j", "init_l2_error", "decomposition_residual", "ok", "flags"});
  for (const auto& cr : report.cells) {
    const Cell& cell = cells[static_cast<std::size_t>(cr.cell)];
    for (const auto& r : cr.records) {
      csv::write_row(out, {std::to_string(cr.cell), cell.axis, format_number(cell.axis_value), std::to_string(r.rep),
                           std::to_string(r.seed), to_string(r.method), format_number(r.beta_true),
                           format_number(r.beta_hat), format_number(r.V), format_number(r.ci_low),
                           format_number(r.ci_high), r.covered ? "1" : "0", format_number(r.B_beta),
                           format_number(r.B_b), format_number(r.V_true), format_number(r.sigma_e2_hat),
                           format_number(r.sigma_j), format_number(r.lambda), format_number(r.lambda_j),
                           format_number(r.init_l2_error), format_number(r.decomposition_residual),
                           r.ok ? "1" : "0", r.flags});
    }
  }
}

double jaccard_topk(std::span<const double> pvals_a, std::span<const double> pvals_b, Index k) {
  if (k < 1 || k > static_cast<Index>(pvals_a.size()) || k > static_cast<Index>(pvals_b.size()))
    throw Error(ErrorKind::InvalidArgument, "jaccard_topk needs 1 <= k <= length");
  auto top = [k](std::span<const double> p) {
    std::vector<Index> idx(p.size());
    std::iota(idx.begin(), idx.end(), Index{0});
    // NaN p-values rank last.
    auto key = [&](Index i) { return std::isnan(p[i]) ? std::numeric_limits<double>::infinity() : p[i]; };
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return key(a) < key(b); });
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  const auto A = top(pvals_a);
  const auto B = top(pvals_b);
  std::vector<Index> common;
  std::set_intersection(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(common));
  const double inter = static_cast<double>(common.size());
  return 1.0 - inter / (2.0 * static_cast<double>(k) - inter);
}

}  // namespace ddlasso::bench
