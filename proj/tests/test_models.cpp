#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "epifc/error.hpp"
#include "epifc/featsel.hpp"
#include "epifc/harness.hpp"
#include "epifc/models.hpp"
#include "epifc/nets.hpp"
#include "epifc/numerics.hpp"
#include "epifc/rng.hpp"
#include "synthetic.hpp"

using namespace epifc;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix X(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) X(i, j) = rng.normal();
  }
  return X;
}

Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

nets::SequenceBatch random_batch(const nets::LstmShape& s, Eigen::Index B, Rng& rng) {
  nets::SequenceBatch batch;
  for (int t = 0; t < s.steps; ++t) batch.steps.push_back(random_matrix(s.channels, B, rng));
  batch.statics = random_matrix(s.statics, B, rng);
  return batch;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an epifc::Error");
  return ErrorCode::InvalidArgument;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// One static feature and a window of 1: the MLP sees a single input column.
struct ScalarProblem {
  FeatureSpec spec = FeatureSpec::make(1, {"latitude"});
  SelectionMask mask;
  ScalarProblem() { mask.indices = {3}; }
};

// Samples from a linear panel whose statics are all available.
SampleSet linear_samples(int countries, int days, int k, double noise = 0.0) {
  synthetic::PanelOptions o;
  o.countries = countries;
  o.days = days;
  o.noise = noise;
  return build_samples(synthetic::linear_panel(o), k);
}

}  // namespace

TEST_CASE("config validation and grids") {
  ForecasterConfig c;
  c.kind = ModelKind::MLP;
  c.n1 = 6;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
  c.n1 = 64;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
  c.n1 = 32;
  c.validate();
  c.batch = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);

  ForecasterConfig base;
  base.kind = ModelKind::MLP;
  CHECK(architecture_grid(base, false).size() == 16);
  base.kind = ModelKind::LSTM;
  const auto full = architecture_grid(base, false);
  const auto tied = architecture_grid(base, true);
  CHECK(full.size() == 64);
  REQUIRE(tied.size() == 16);
  for (const auto& t : tied) CHECK(t.h1 == t.h2);
  base.kind = ModelKind::LR;
  CHECK(architecture_grid(base, false).size() == 1);
  // Grid entries are distinct.
  for (std::size_t i = 0; i < full.size(); ++i) {
    for (std::size_t j = i + 1; j < full.size(); ++j) CHECK_FALSE(full[i] == full[j]);
  }
}

TEST_CASE("MLP gradients match finite differences") {
  Rng rng(11);
  for (auto [in, h1, h2] : {std::tuple{5, 4, 4}, std::tuple{3, 8, 16}, std::tuple{1, 32, 4}}) {
    const nets::MlpShape s{in, h1, h2};
    const Matrix X = random_matrix(9, in, rng);
    const Vector y = random_vector(9, rng);
    const Vector theta = random_vector(s.parameter_count(), rng, 0.5);
    Vector grad;
    nets::mlp_loss(s, theta, X, y, &grad);
    const double err =
        grad_check([&](const Vector& p) { return nets::mlp_loss(s, p, X, y, nullptr); }, grad, theta);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("LSTM gradients match finite differences") {
  Rng rng(12);
  for (auto shape : {nets::LstmShape{4, 3, 2, 4, 4, 4}, nets::LstmShape{14, 3, 0, 8, 4, 16},
                     nets::LstmShape{2, 3, 5, 4, 8, 4}}) {
    const auto batch = random_batch(shape, 7, rng);
    const Vector y = random_vector(7, rng);
    Vector theta = nets::lstm_init(shape, rng);
    theta += random_vector(theta.size(), rng, 0.2);
    Vector grad;
    nets::lstm_loss(shape, theta, batch, y, &grad);
    const double err =
        grad_check([&](const Vector& p) { return nets::lstm_loss(shape, p, batch, y, nullptr); }, grad, theta);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("zero-weight MLP outputs the output bias") {
  const nets::MlpShape s{4, 8, 4};
  Vector theta = Vector::Zero(s.parameter_count());
  theta[theta.size() - 1] = 2.5;
  Rng rng(1);
  const Vector out = nets::mlp_forward(s, theta, random_matrix(6, 4, rng));
  CHECK((out.array() == 2.5).all());
}

TEST_CASE("single-step LSTM with zero recurrence equals the hand-written gate algebra") {
  const nets::LstmShape s{1, 3, 2, 4, 4, 4};
  Rng rng(5);
  Vector theta = random_vector(s.parameter_count(), rng, 0.7);
  const Eigen::Index h = s.hidden;
  // Layout: Wx (4h x C), Wh (4h x h), b (4h), D1 (d1 x (h + statics)), c1, D2, c2, w3, b3.
  Eigen::Index off = 4 * h * s.channels;
  theta.segment(off, 4 * h * h).setZero();
  const auto batch = random_batch(s, 5, rng);
  const Vector out = nets::lstm_forward(s, theta, batch);

  const Eigen::Map<const Matrix> Wx(theta.data(), 4 * h, s.channels);
  off += 4 * h * h;
  const Vector b = theta.segment(off, 4 * h);
  off += 4 * h;
  const Eigen::Map<const Matrix> D1(theta.data() + off, s.dense1, h + s.statics);
  off += s.dense1 * (h + s.statics);
  const Vector c1 = theta.segment(off, s.dense1);
  off += s.dense1;
  const Eigen::Map<const Matrix> D2(theta.data() + off, s.dense2, s.dense1);
  off += s.dense2 * s.dense1;
  const Vector c2 = theta.segment(off, s.dense2);
  off += s.dense2;
  const Vector w3 = theta.segment(off, s.dense2);
  const double b3 = theta[off + s.dense2];

  for (Eigen::Index n = 0; n < 5; ++n) {
    const Vector z = Wx * batch.steps[0].col(n) + b;
    Vector hid(h);
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = sigmoid(z[j]), g = std::tanh(z[2 * h + j]), o = sigmoid(z[3 * h + j]);
      hid[j] = o * std::tanh(i * g);  // previous cell state is zero
    }
    Vector u(h + s.statics);
    u << hid, batch.statics.col(n);
    const Vector a1 = (D1 * u + c1).array().tanh().matrix();
    const Vector a2 = (D2 * a1 + c2).array().tanh().matrix();
    CHECK(out[n] == doctest::Approx(w3.dot(a2) + b3).epsilon(1e-12));
  }
}

TEST_CASE("LR: exact fit, affine predictions, determinism") {
  const auto samples = linear_samples(5, 50, 1);
  const auto mask = no_fs(samples.spec);
  ForecasterConfig cfg;
  const auto model = fit(cfg, samples.X, samples.target(1), mask, samples.spec);
  const Vector pred = predict(model, samples.X);
  CHECK(r2_score(samples.target(1), pred) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK((pred - samples.target(1)).cwiseAbs().maxCoeff() <= 1e-10 * samples.target(1).cwiseAbs().maxCoeff());

  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const double a = rng.uniform(-2.0, 3.0);
    const Matrix x1 = samples.X.topRows(3), x2 = samples.X.bottomRows(3);
    const Vector mixed = predict(model, a * x1 + (1 - a) * x2);
    const Vector expect = a * predict(model, x1) + (1 - a) * predict(model, x2);
    CHECK((mixed - expect).cwiseAbs().maxCoeff() <= 1e-8 * expect.cwiseAbs().maxCoeff());
  }
  // Constant target is reproduced exactly.
  const Vector flat = Vector::Constant(samples.X.rows(), 42.0);
  const auto cmodel = fit(cfg, samples.X, flat, mask, samples.spec);
  CHECK((predict(cmodel, samples.X).array() - 42.0).abs().maxCoeff() <= 1e-9);

  // Mask mismatch.
  CHECK(code_of([&] { predict(model, samples.X.leftCols(10)); }) == ErrorCode::MaskMismatch);
  CHECK(code_of([&] { fit(cfg, samples.X.leftCols(10), samples.target(1), mask, samples.spec); }) ==
        ErrorCode::MaskMismatch);
}

// The training defaults take one ADAM step per epoch when the batch covers
// the whole data set, so these two small problems use smaller batches.
TEST_CASE("MLP fits x^2 on [-1, 1]") {
  ScalarProblem p;
  Matrix X(200, 1);
  Vector y(200);
  for (int i = 0; i < 200; ++i) {
    X(i, 0) = -1.0 + 2.0 * i / 199.0;
    y[i] = X(i, 0) * X(i, 0);
  }
  for (std::uint64_t seed : {1, 2, 3}) {
    ForecasterConfig cfg;
    cfg.kind = ModelKind::MLP;
    cfg.batch = 10;
    cfg.seed = seed;
    const auto model = fit(cfg, X, y, p.mask, p.spec);
    const double mse = (predict(model, X) - y).squaredNorm() / 200.0;
    MESSAGE("x^2 MLP seed " << seed << ": MSE " << mse << " after " << model.epochs_run() << " epochs");
    CHECK(mse < 1e-3);
  }
}

TEST_CASE("LSTM on a constant dataset predicts the constant") {
  const auto spec = FeatureSpec::make(kDefaultWindow, {"latitude"});
  const auto mask = no_fs(spec);
  const Matrix Z = Matrix::Constant(100, static_cast<Eigen::Index>(spec.size()), 0.3);
  const Vector y = Vector::Constant(Z.rows(), 0.75);
  for (std::uint64_t seed : {4, 5}) {
    ForecasterConfig cfg;
    cfg.kind = ModelKind::LSTM;
    cfg.batch = 32;
    cfg.seed = seed;
    const auto model = fit(cfg, Z, y, mask, spec);
    const double mse = (predict(model, Z).array() - 0.75).square().mean();
    MESSAGE("constant LSTM seed " << seed << ": MSE " << mse << " after " << model.epochs_run() << " epochs");
    CHECK(mse < 1e-6);
  }
}

TEST_CASE("training: early stopping rule, determinism and row independence") {
  const auto samples = linear_samples(4, 40, 2, 0.05);
  const auto mask = no_fs(samples.spec);
  std::vector<std::size_t> rows(samples.rows());
  std::iota(rows.begin(), rows.end(), 0);
  const auto scaler = fit_scaler(samples, rows);
  const Matrix Z = transform(samples, scaler, rows);
  const Vector y = scaler.transform_target(2, samples.target(2));

  for (auto kind : {ModelKind::MLP, ModelKind::LSTM}) {
    CAPTURE(to_string(kind));
    ForecasterConfig cfg;
    cfg.kind = kind;
    cfg.max_epochs = kind == ModelKind::MLP ? 600 : 80;
    cfg.patience = kind == ModelKind::MLP ? 30 : 5;
    cfg.batch = 64;
    cfg.seed = 21;
    const auto a = fit(cfg, Z, y, mask, samples.spec);
    const auto b = fit(cfg, Z, y, mask, samples.spec);
    CHECK(a.params == b.params);  // bitwise
    CHECK(a.loss_curve == b.loss_curve);

    // Stopped at the cap, or after `patience` epochs with no new minimum.
    const auto& curve = a.loss_curve;
    const auto e = curve.size();
    REQUIRE(e >= 1);
    if (static_cast<int>(e) < cfg.max_epochs) {
      REQUIRE(static_cast<int>(e) > cfg.patience);
      const double before = *std::min_element(curve.begin(), curve.end() - cfg.patience);
      const double tail = *std::min_element(curve.end() - cfg.patience, curve.end());
      CHECK(tail >= before);
      // And the stop happened at the first such epoch: the last minimum sits
      // exactly `patience` epochs back.
      const auto last_best = e - static_cast<std::size_t>(cfg.patience) - 1;
      if (last_best > 0) {
        CHECK(curve[last_best] < *std::min_element(curve.begin(), curve.begin() + static_cast<long>(last_best)));
      }
    } else {
      CHECK(static_cast<int>(e) == cfg.max_epochs);
    }

    // Predictions are bitwise repeatable and row-permutation equivariant.
    const Vector p1 = predict(a, Z);
    CHECK(p1 == predict(a, Z));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(Z.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(2);
    rng.shuffle(perm);
    Matrix Zp(Z.rows(), Z.cols());
    for (Eigen::Index i = 0; i < Z.rows(); ++i) Zp.row(i) = Z.row(perm[static_cast<std::size_t>(i)]);
    const Vector pp = predict(a, Zp);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      CHECK(pp[i] == doctest::Approx(p1[perm[static_cast<std::size_t>(i)]]).epsilon(1e-12));
    }

    // A different seed gives different parameters.
    cfg.seed = 22;
    CHECK_FALSE(fit(cfg, Z, y, mask, samples.spec).params == a.params);
  }
}

TEST_CASE("LSTM input layout: temporal slots and bypassing statics") {
  const auto spec = FeatureSpec::make(14, {"latitude", "longitude"});
  SelectionMask mask;
  mask.indices = {0, 13, 14 + 2, 28 + 5, 42, 43};
  const auto layout = InputLayout::make(spec, mask);
  CHECK(layout.steps == 14);
  CHECK(layout.num_static == 2);
  // lag 0 is the newest step (13); lag 13 the oldest (0).
  CHECK(layout.slot == std::vector<int>{13 * 3 + 0, 0 * 3 + 0, 11 * 3 + 1, 8 * 3 + 2, -1, -2});
  Matrix X(2, 6);
  X << 1, 2, 3, 4, 5, 6,
       7, 8, 9, 10, 11, 12;
  const auto seq = to_sequences(layout, X);
  CHECK(seq.steps[13](0, 1) == 7);
  CHECK(seq.steps[0](0, 0) == 2);
  CHECK(seq.steps[11](1, 0) == 3);
  CHECK(seq.steps[8](2, 1) == 10);
  CHECK(seq.steps[5].isZero());  // unselected slots are zero-filled
  CHECK(seq.statics(1, 0) == 6);
}

TEST_CASE("grid search on linear data and its tie-break") {
  const auto samples = linear_samples(6, 50, 1);
  const auto mask = no_fs(samples.spec);
  const auto layout = InputLayout::make(samples.spec, mask);
  ForecasterConfig base;
  base.kind = ModelKind::MLP;
  CvProtocol cv;
  cv.repetitions = 2;
  cv.seed = 3;
  const auto grid = architecture_grid(base, false);
  const auto result = grid_search(grid, layout, [&](const ForecasterConfig& c) -> std::optional<double> {
    const auto report = mc_cv(samples, mask, c, 1, cv);
    if (!report.valid()) return std::nullopt;
    return report.test_mean;
  });
  REQUIRE(result.scores.size() == 16);
  for (const auto& [cfg, score] : result.scores) {
    CAPTURE(cfg.architecture());
    REQUIRE(score.has_value());
    CHECK(*score > 0.9);
  }

  // Equal scores resolve to the fewest parameters: (4, 4).
  const auto tied = grid_search(grid, layout, [](const ForecasterConfig&) { return std::optional<double>(0.95); });
  CHECK(tied.best.n1 == 4);
  CHECK(tied.best.n2 == 4);
  // Higher score wins regardless of size.
  const auto best32 = grid_search(grid, layout, [](const ForecasterConfig& c) {
    return std::optional<double>(c.n1 == 32 && c.n2 == 8 ? 0.99 : 0.5);
  });
  CHECK(best32.best.architecture() == "n1=32,n2=8");
  // Equal parameter counts fall back to lexicographic order.
  ForecasterConfig l;
  l.kind = ModelKind::LSTM;
  const auto lgrid = architecture_grid(l, false);
  SelectionMask one;
  one.indices = {0};
  const auto llayout = InputLayout::make(samples.spec, one);
  const auto lt = grid_search(lgrid, llayout, [](const ForecasterConfig& c) {
    return std::optional<double>((c.h1 == 8 && c.h2 == 4) || (c.h1 == 4 && c.h2 == 8) ? 0.9 : 0.1);
  });
  CHECK(lt.best.h_lstm == 4);
  const auto p48 = [&](int a, int b) {
    auto c = l;
    c.h1 = a;
    c.h2 = b;
    return parameter_count(c, llayout);
  };
  CHECK(((p48(4, 8) < p48(8, 4)) ? (lt.best.h1 == 4) : (lt.best.h1 == 8)));
  CHECK(code_of([&] {
          grid_search(grid, layout, [](const ForecasterConfig&) { return std::optional<double>(); });
        }) == ErrorCode::AllCellsFailed);
}

TEST_CASE("model serialization reproduces predictions bitwise") {
  const auto samples = linear_samples(3, 40, 1, 0.02);
  std::vector<std::size_t> rows(samples.rows());
  std::iota(rows.begin(), rows.end(), 0);
  const auto scaler = fit_scaler(samples, rows);
  const Matrix Z = transform(samples, scaler, rows);
  const Vector y = scaler.transform_target(1, samples.target(1));
  SelectionMask mask;
  mask.indices = {0, 1, 14, 30, 42, 50};
  mask.method = SelectionMethod::RFS;
  mask.prefix_size = 6;
  const Matrix Zm = gather(Z, rows, mask.indices);
  for (auto kind : kAllModels) {
    ForecasterConfig cfg;
    cfg.kind = kind;
    cfg.max_epochs = 20;
    cfg.h_lstm = 8;
    cfg.seed = 7;
    auto model = fit(cfg, Zm, y, mask, samples.spec);
    model.scaler = scaler;
    const auto text = serialize_model(model);
    const auto back = deserialize_model(text);
    CHECK(back.config == model.config);
    CHECK(back.mask == model.mask);
    CHECK(back.params == model.params);
    CHECK(back.loss_curve == model.loss_curve);
    REQUIRE(back.scaler.has_value());
    CHECK(back.scaler->feature_sd == scaler.feature_sd);
    CHECK(back.scaler->target_mean == scaler.target_mean);
    CHECK(predict(back, Zm) == predict(model, Zm));
    CHECK(serialize_model(back) == text);

    const auto path = std::filesystem::temp_directory_path() / "epifc_model_roundtrip.json";
    save_model(model, path);
    CHECK(predict(load_model(path), Zm) == predict(model, Zm));
    std::filesystem::remove(path);
  }
  CHECK(code_of([] { deserialize_model(R"({"format":"epifc-model","version":99})"); }) ==
        ErrorCode::InvalidArgument);
}
