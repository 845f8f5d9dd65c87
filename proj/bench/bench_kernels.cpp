// Timing of the parallel kernels against their serial references, plus
// single-fit costs that drive the sweep budget.
//
//   epifc_bench [--threads N] [--countries C] [--days T]

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>

#include "epifc/commands.hpp"
#include "epifc/featsel.hpp"
#include "epifc/harness.hpp"
#include "epifc/numerics.hpp"
#include "epifc/rng.hpp"
#include "synthetic.hpp"

using namespace epifc;

namespace {

template <typename F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) X(i, j) = rng.normal();
  }
  return X;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"epifc kernel benchmark"};
  int threads = omp_get_max_threads();
  int countries = 20, days = 120;
  app.add_option("--threads", threads, "OpenMP threads for the parallel kernels");
  app.add_option("--countries", countries, "synthetic panel countries");
  app.add_option("--days", days, "synthetic panel days");
  CLI11_PARSE(app, argc, argv);
  epifc::tune_allocator();
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  omp_set_num_threads(threads);

  // Correlation matrix.
  {
    const Matrix X = random_matrix(4000, 78, 7);
    Matrix serial, parallel;
    const double ts = seconds([&] { serial = correlation_matrix_serial(X); });
    const double tp = seconds([&] { parallel = correlation_matrix(X); });
    std::printf("correlation 4000x78   serial %8.4f s  parallel(%d) %8.4f s  max|diff| %.2e\n", ts, threads, tp,
                (serial - parallel).cwiseAbs().maxCoeff());
  }

  synthetic::PanelOptions opt;
  opt.countries = countries;
  opt.days = days;
  const auto panel = synthetic::epidemic_panel(opt);
  const auto samples = build_samples(panel, 30);
  std::printf("panel %d countries x %d days -> %lld rows x %lld features\n", countries, days,
              static_cast<long long>(samples.X.rows()), static_cast<long long>(samples.X.cols()));

  // Lasso selection (5 folds x 100 lambdas).
  {
    LassoSelection sel;
    const double t = seconds([&] { sel = lasso_select(samples, 1); });
    std::printf("lasso_select K=1       %8.4f s  support %zu\n", t, sel.mask.size());
  }

  // Single fits at the largest fast-mode architectures.
  {
    std::vector<std::size_t> all(samples.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto scaler = fit_scaler(samples, all);
    const Matrix Z = transform(samples, scaler, all);
    const Vector y = scaler.transform_target(1, samples.target(1));
    const auto mask = no_fs(samples.spec);
    for (auto kind : {ModelKind::MLP, ModelKind::LSTM}) {
      for (int h : {4, 32}) {
        ForecasterConfig cfg;
        cfg.kind = kind;
        cfg.max_epochs = 100;
        cfg.n1 = cfg.n2 = cfg.h_lstm = cfg.h1 = cfg.h2 = h;
        TrainedForecaster model;
        const double t = seconds([&] { model = fit(cfg, Z, y, mask, samples.spec); });
        std::printf("fit %-4s h=%-2d          %8.4f s  (%zu epochs)\n", std::string(to_string(kind)).c_str(), h, t,
                    model.epochs_run());
      }
    }
  }

  // Sweep: parallel cells against the serial reference.
  {
    SweepConfig cfg;
    cfg.models = {ModelKind::LR, ModelKind::MLP};
    cfg.methods = {SelectionMethod::NoFS, SelectionMethod::RFS, SelectionMethod::Lasso};
    cfg.horizons = {1, 5};
    cfg.cv.repetitions = 3;
    cfg.max_epochs = 10;
    cfg.fast = true;
    cfg.workers = threads;
    SweepResult serial, parallel;
    const double ts = seconds([&] { serial = run_sweep_serial(cfg, samples); });
    const double tp = seconds([&] { parallel = run_sweep(cfg, samples); });
    bool same = serial.cells.size() == parallel.cells.size();
    for (const auto& [key, cell] : serial.cells) {
      same = same && cell_to_json(cell, "") == cell_to_json(parallel.cells.at(key), "");
    }
    std::printf("sweep %zu cells         serial %8.4f s  parallel(%d) %8.4f s  identical %s\n", serial.cells.size(), ts,
                threads, tp, same ? "yes" : "NO");
  }
  return 0;
}
