#include "resinv/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "resinv/errors.hpp"
#include "resinv/io_util.hpp"
#include "resinv/parallel.hpp"

namespace resinv {

double pressure_rmse(const Eigen::VectorXd& pred_obs,
                     const Eigen::VectorXd& ref_obs) {
  if (pred_obs.size() != ref_obs.size())
    throw std::invalid_argument("pressure_rmse length mismatch");
  if (pred_obs.size() == 0) throw std::invalid_argument("pressure_rmse on empty vectors");
  return std::sqrt((pred_obs - ref_obs).squaredNorm() /
                   static_cast<double>(pred_obs.size()));
}

double perm_rel_l2(const Eigen::VectorXd& pred_logk,
                   const Eigen::VectorXd& true_logk) {
  if (pred_logk.size() != true_logk.size())
    throw std::invalid_argument("perm_rel_l2 grid mismatch");
  const double ref_norm = true_logk.norm();
  if (ref_norm == 0.0) return pred_logk.norm();
  return (pred_logk - true_logk).norm() / ref_norm;
}

std::vector<std::pair<double, double>> ecdf(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("ecdf of empty sample");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> steps;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    // Collapse duplicates: keep the final (largest) fraction per value.
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    steps.emplace_back(sorted[i], static_cast<double>(i + 1) / n);
  }
  return steps;
}

double quantile_interpolated(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  if (p <= 0.0) return values.front();
  if (p >= 1.0) return values.back();
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

BoxStats box_stats(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("box_stats of empty sample");
  BoxStats stats;
  stats.median = quantile_interpolated(values, 0.5);
  stats.q1 = quantile_interpolated(values, 0.25);
  stats.q3 = quantile_interpolated(values, 0.75);
  const double iqr = stats.q3 - stats.q1;
  const double lo_fence = stats.q1 - 1.5 * iqr;
  const double hi_fence = stats.q3 + 1.5 * iqr;
  stats.lo_whisker = stats.q1;
  stats.hi_whisker = stats.q3;
  bool any = false;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) continue;
    if (!any) {
      stats.lo_whisker = stats.hi_whisker = v;
      any = true;
    } else {
      stats.lo_whisker = std::min(stats.lo_whisker, v);
      stats.hi_whisker = std::max(stats.hi_whisker, v);
    }
  }
  return stats;
}

Histogram histogram(const std::vector<double>& values, int min_bins) {
  if (values.empty()) throw std::invalid_argument("histogram of empty sample");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  Histogram h;
  h.lo = lo;
  if (hi == lo) {
    h.bin_width = 1.0;
    h.counts.assign(1, static_cast<int>(values.size()));
    return h;
  }
  const BoxStats box = box_stats(values);
  const double iqr = box.q3 - box.q1;
  int n_bins = min_bins;
  if (iqr > 0.0) {
    const double fd_width =
        2.0 * iqr / std::cbrt(static_cast<double>(values.size()));
    n_bins = std::max(min_bins, static_cast<int>(std::ceil((hi - lo) / fd_width)));
  }
  h.bin_width = (hi - lo) / n_bins;
  h.counts.assign(n_bins, 0);
  for (double v : values) {
    int bin = static_cast<int>((v - lo) / h.bin_width);
    bin = std::clamp(bin, 0, n_bins - 1);
    ++h.counts[bin];
  }
  return h;
}

namespace {

void finalize_report(EvalReport& report) {
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  report.mean_pres_dd = mean(report.pres_dd);
  report.mean_pres_pi = mean(report.pres_pi);
  report.mean_perm_dd = mean(report.perm_dd);
  report.mean_perm_pi = mean(report.perm_pi);

  double win_pres = 0.0, win_perm = 0.0;
  for (int i = 0; i < report.n_used; ++i) {
    win_pres += report.pres_pi[i] < report.pres_dd[i]
                    ? 1.0
                    : (report.pres_pi[i] == report.pres_dd[i] ? 0.5 : 0.0);
    win_perm += report.perm_pi[i] < report.perm_dd[i]
                    ? 1.0
                    : (report.perm_pi[i] == report.perm_dd[i] ? 0.5 : 0.0);
  }
  if (report.n_used > 0) {
    win_pres /= report.n_used;
    win_perm /= report.n_used;
  }
  report.win_pres_pi = win_pres;
  report.win_perm_pi = win_perm;
  report.reduction_pres_pct =
      report.mean_pres_dd > 0.0
          ? (report.mean_pres_dd - report.mean_pres_pi) / report.mean_pres_dd * 100.0
          : 0.0;
  report.reduction_perm_pct =
      report.mean_perm_dd > 0.0
          ? (report.mean_perm_dd - report.mean_perm_pi) / report.mean_perm_dd * 100.0
          : 0.0;

  report.box_pres_dd = box_stats(report.pres_dd);
  report.box_pres_pi = box_stats(report.pres_pi);
  report.box_perm_dd = box_stats(report.perm_dd);
  report.box_perm_pi = box_stats(report.perm_pi);
  report.ecdf_pres_dd = ecdf(report.pres_dd);
  report.ecdf_pres_pi = ecdf(report.pres_pi);
  report.ecdf_perm_dd = ecdf(report.perm_dd);
  report.ecdf_perm_pi = ecdf(report.perm_pi);
  report.hist_pres_dd = histogram(report.pres_dd);
  report.hist_pres_pi = histogram(report.pres_pi);
  report.hist_perm_dd = histogram(report.perm_dd);
  report.hist_perm_pi = histogram(report.perm_pi);
}

}  // namespace

EvalReport compare_models(const MlpParams& dd, const MlpParams& pi,
                          const Dataset& test, const ModelContext& ctx,
                          double coef_scale, int n_threads) {
  if (test.size() < 1) throw std::invalid_argument("empty test dataset");
  if (dd.n_in != ctx.n_obs() || pi.n_in != ctx.n_obs() ||
      dd.n_out != ctx.n_modes() || pi.n_out != ctx.n_modes())
    throw std::invalid_argument("model dimensions do not match context");
  if (!(coef_scale > 0.0)) throw std::invalid_argument("coef_scale must be positive");

  const int n = test.size();
  struct SampleOut {
    double pres_dd = 0.0, pres_pi = 0.0, perm_dd = 0.0, perm_pi = 0.0;
    bool ok = false;
  };
  std::vector<SampleOut> out(n);

  parallel_for(n, n_threads, [&](int j) {
    const SampleRecord& rec = test.records[j];
    try {
      const Eigen::MatrixXd input = rec.clean.transpose();
      const Eigen::VectorXd true_logk =
          realize_log_permeability(ctx.basis, rec.coeffs).log_k;
      double pres[2], perm[2];
      const MlpParams* models[2] = {&dd, &pi};
      for (int m = 0; m < 2; ++m) {
        const CoeffVector pred =
            mlp_forward(*models[m], input, nullptr).row(0).transpose() / coef_scale;
        const PermeabilityField field = realize_log_permeability(ctx.basis, pred);
        DarcySolve solve(ctx.grid, field, ctx.dirichlet);
        pres[m] = pressure_rmse(solve.observed(ctx.obs), rec.clean);
        perm[m] = perm_rel_l2(field.log_k, true_logk);
      }
      out[j] = SampleOut{pres[0], pres[1], perm[0], perm[1], true};
    } catch (const std::exception&) {
      out[j].ok = false;
    }
  });

  EvalReport report;
  for (int j = 0; j < n; ++j) {
    if (!out[j].ok) {
      ++report.n_failed;
      continue;
    }
    report.pres_dd.push_back(out[j].pres_dd);
    report.pres_pi.push_back(out[j].pres_pi);
    report.perm_dd.push_back(out[j].perm_dd);
    report.perm_pi.push_back(out[j].perm_pi);
  }
  report.n_used = static_cast<int>(report.pres_dd.size());
  if (report.n_used == 0)
    throw NumericError("every test sample failed during evaluation");
  finalize_report(report);
  return report;
}

const std::array<const char*, 8> kScenarioNames = {
    "LLL", "LLS", "LSL", "LSS", "SLL", "SLS", "SSL", "SSS"};

ScenarioSpec scenario_from_name(const std::string& name,
                                const ScenarioFactors& factors) {
  if (name.size() != 3 ||
      name.find_first_not_of("LS") != std::string::npos)
    throw ConfigError("scenario name must be three letters of L/S, got: " + name);
  ScenarioSpec spec;
  spec.name = name;
  spec.train_size = name[0] == 'L' ? factors.train_large : factors.train_small;
  spec.n_obs = name[1] == 'L' ? factors.obs_large : factors.obs_small;
  spec.corr_length = name[2] == 'L' ? factors.corr_large : factors.corr_small;
  return spec;
}

std::vector<ScenarioResult> run_scenarios(const std::vector<ScenarioSpec>& specs,
                                          const ScenarioRunConfig& config) {
  std::vector<ScenarioResult> results;
  results.reserve(specs.size());
  for (std::size_t idx = 0; idx < specs.size(); ++idx) {
    const ScenarioSpec& spec = specs[idx];
    ScenarioResult result;
    result.spec = spec;
    try {
      const std::uint64_t scen_seed =
          derive_seed(config.master_seed, 0x5000 + idx);
      const CovarianceSpec cov{config.sigma2, spec.corr_length};
      KLBasis basis = build_kl_basis(config.grid, cov, config.n_modes,
                                     config.mean_log_k);
      const ObservationSet obs = sample_observation_nodes(
          config.grid, spec.n_obs, derive_seed(scen_seed, 1));
      const ModelContext ctx(config.grid, config.bc, std::move(basis), obs);

      const double noise = config.train_config.noise_level;
      const Dataset train_set =
          generate_dataset(spec.train_size, ctx, noise, derive_seed(scen_seed, 2),
                           DatasetRole::kTrain, config.n_threads);
      const Dataset val_set =
          generate_dataset(config.n_validation, ctx, noise,
                           derive_seed(scen_seed, 3), DatasetRole::kValidation,
                           config.n_threads);
      const Dataset test_set =
          generate_dataset(config.n_test, ctx, noise, derive_seed(scen_seed, 4),
                           DatasetRole::kTest, config.n_threads);

      TrainOptions options;
      options.n_threads = config.n_threads;

      TrainConfig dd_config = config.train_config;
      dd_config.model_kind = ModelKind::kDataDriven;
      const TrainResult dd = train(train_set, val_set, dd_config, ctx,
                                   derive_seed(scen_seed, 5), options);

      TrainConfig pi_config = config.train_config;
      pi_config.model_kind = ModelKind::kPhysicsInformed;
      const TrainResult pi = train(train_set, val_set, pi_config, ctx,
                                   derive_seed(scen_seed, 6), options);

      result.report =
          compare_models(dd.params, pi.params, test_set, ctx,
                         config.train_config.coef_scale, config.n_threads);
    } catch (const std::exception& e) {
      result.error = e.what();
      std::cerr << "[scenarios] " << spec.name << " failed: " << e.what() << "\n";
    }
    results.push_back(std::move(result));
  }
  return results;
}

namespace {

const char* kSummaryHeader =
    "name,n_test,n_failed,mean_pres_dd,mean_pres_pi,median_pres_dd,"
    "median_pres_pi,mean_perm_dd,mean_perm_pi,median_perm_dd,median_perm_pi,"
    "win_pres_pi_pct,win_perm_pi_pct,reduction_pres_pct,reduction_perm_pct\n";

}  // namespace

void write_summary_csv(
    const std::vector<std::pair<std::string, const EvalReport*>>& reports,
    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open summary CSV for writing: " + path);
  out << kSummaryHeader;
  for (const auto& [name, report] : reports) {
    const auto f = io::format_double;
    out << name << ',' << report->n_used << ',' << report->n_failed << ','
        << f(report->mean_pres_dd) << ',' << f(report->mean_pres_pi) << ','
        << f(report->box_pres_dd.median) << ',' << f(report->box_pres_pi.median)
        << ',' << f(report->mean_perm_dd) << ',' << f(report->mean_perm_pi)
        << ',' << f(report->box_perm_dd.median) << ','
        << f(report->box_perm_pi.median) << ',' << f(100.0 * report->win_pres_pi)
        << ',' << f(100.0 * report->win_perm_pi) << ','
        << f(report->reduction_pres_pct) << ',' << f(report->reduction_perm_pct)
        << '\n';
  }
}

void write_report_csvs(const EvalReport& report, const std::string& prefix) {
  const auto f = io::format_double;
  {
    std::ofstream out(prefix + "samples.csv");
    if (!out) throw IoError("cannot write " + prefix + "samples.csv");
    out << "sample,pres_rmse_dd,pres_rmse_pi,perm_rel_l2_dd,perm_rel_l2_pi\n";
    for (int i = 0; i < report.n_used; ++i)
      out << i << ',' << f(report.pres_dd[i]) << ',' << f(report.pres_pi[i])
          << ',' << f(report.perm_dd[i]) << ',' << f(report.perm_pi[i]) << '\n';
  }
  {
    std::ofstream out(prefix + "ecdf.csv");
    if (!out) throw IoError("cannot write " + prefix + "ecdf.csv");
    out << "metric,model,value,fraction\n";
    const auto dump = [&](const char* metric, const char* model,
                          const std::vector<std::pair<double, double>>& steps) {
      for (const auto& [v, p] : steps)
        out << metric << ',' << model << ',' << f(v) << ',' << f(p) << '\n';
    };
    dump("pressure", "dd", report.ecdf_pres_dd);
    dump("pressure", "pi", report.ecdf_pres_pi);
    dump("permeability", "dd", report.ecdf_perm_dd);
    dump("permeability", "pi", report.ecdf_perm_pi);
  }
  {
    std::ofstream out(prefix + "box.csv");
    if (!out) throw IoError("cannot write " + prefix + "box.csv");
    out << "metric,model,median,q1,q3,lo_whisker,hi_whisker\n";
    const auto dump = [&](const char* metric, const char* model,
                          const BoxStats& b) {
      out << metric << ',' << model << ',' << f(b.median) << ',' << f(b.q1)
          << ',' << f(b.q3) << ',' << f(b.lo_whisker) << ',' << f(b.hi_whisker)
          << '\n';
    };
    dump("pressure", "dd", report.box_pres_dd);
    dump("pressure", "pi", report.box_pres_pi);
    dump("permeability", "dd", report.box_perm_dd);
    dump("permeability", "pi", report.box_perm_pi);
  }
  {
    std::ofstream out(prefix + "hist.csv");
    if (!out) throw IoError("cannot write " + prefix + "hist.csv");
    out << "metric,model,bin_lo,bin_hi,count\n";
    const auto dump = [&](const char* metric, const char* model,
                          const Histogram& h) {
      for (std::size_t b = 0; b < h.counts.size(); ++b)
        out << metric << ',' << model << ',' << f(h.lo + b * h.bin_width) << ','
            << f(h.lo + (b + 1) * h.bin_width) << ',' << h.counts[b] << '\n';
    };
    dump("pressure", "dd", report.hist_pres_dd);
    dump("pressure", "pi", report.hist_pres_pi);
    dump("permeability", "dd", report.hist_perm_dd);
    dump("permeability", "pi", report.hist_perm_pi);
  }
}

}  // namespace resinv
