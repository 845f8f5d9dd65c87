#include "epifc/models.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "epifc/error.hpp"
#include "epifc/numerics.hpp"
#include "text_io.hpp"

namespace epifc {

using nlohmann::json;

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LR: return "LR";
    case ModelKind::MLP: return "MLP";
    case ModelKind::LSTM: return "LSTM";
  }
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
  for (auto k : kAllModels) {
    if (detail::iequals(to_string(k), detail::trim(text))) return k;
  }
  return std::nullopt;
}

namespace {

bool admissible(int size) {
  return std::find(std::begin(kHiddenSizes), std::end(kHiddenSizes), size) != std::end(kHiddenSizes);
}

}  // namespace

void ForecasterConfig::validate() const {
  if (kind == ModelKind::MLP && !(admissible(n1) && admissible(n2))) {
    throw Error(ErrorCode::InvalidArgument, "MLP hidden sizes must be in {4,8,16,32}");
  }
  if (kind == ModelKind::LSTM && !(admissible(h_lstm) && admissible(h1) && admissible(h2))) {
    throw Error(ErrorCode::InvalidArgument, "LSTM sizes must be in {4,8,16,32}");
  }
  if (batch < 1 || max_epochs < 1 || patience < 1) {
    throw Error(ErrorCode::InvalidArgument, "batch, max_epochs and patience must be >= 1");
  }
}

std::string ForecasterConfig::architecture() const {
  switch (kind) {
    case ModelKind::LR: return standardize_lr ? "standardized" : "raw";
    case ModelKind::MLP: return "n1=" + std::to_string(n1) + ",n2=" + std::to_string(n2);
    case ModelKind::LSTM:
      return "h_lstm=" + std::to_string(h_lstm) + ",h1=" + std::to_string(h1) +
             ",h2=" + std::to_string(h2);
  }
  return {};
}

bool uses_standardized_data(const ForecasterConfig& config) {
  return config.kind != ModelKind::LR || config.standardize_lr;
}

InputLayout InputLayout::make(const FeatureSpec& spec, const SelectionMask& mask) {
  InputLayout layout;
  layout.steps = spec.window;
  for (auto idx : mask.indices) {
    if (idx >= spec.size()) throw Error(ErrorCode::MaskMismatch, "mask index beyond feature spec");
    const auto& f = spec.features[idx];
    if (f.temporal) {
      const int step = spec.window - 1 - f.lag;
      layout.slot.push_back(step * layout.channels + static_cast<int>(f.channel));
    } else {
      layout.slot.push_back(-1 - layout.num_static++);
    }
  }
  return layout;
}

nets::SequenceBatch to_sequences(const InputLayout& layout, const Matrix& X,
                                 std::span<const Eigen::Index> rows) {
  if (static_cast<std::size_t>(X.cols()) != layout.slot.size()) {
    throw Error(ErrorCode::MaskMismatch, "input width does not match the model's mask");
  }
  const Eigen::Index B = rows.empty() ? X.rows() : static_cast<Eigen::Index>(rows.size());
  nets::SequenceBatch batch;
  batch.steps.assign(static_cast<std::size_t>(layout.steps), Matrix::Zero(layout.channels, B));
  batch.statics.resize(layout.num_static, B);
  for (std::size_t j = 0; j < layout.slot.size(); ++j) {
    const int slot = layout.slot[j];
    const auto col = static_cast<Eigen::Index>(j);
    for (Eigen::Index b = 0; b < B; ++b) {
      const double v = X(rows.empty() ? b : rows[static_cast<std::size_t>(b)], col);
      if (slot >= 0) batch.steps[static_cast<std::size_t>(slot / layout.channels)](slot % layout.channels, b) = v;
      else batch.statics(-1 - slot, b) = v;
    }
  }
  return batch;
}

namespace {

nets::MlpShape mlp_shape(const ForecasterConfig& c, const InputLayout& layout) {
  return {static_cast<int>(layout.slot.size()), c.n1, c.n2};
}

nets::LstmShape lstm_shape(const ForecasterConfig& c, const InputLayout& layout) {
  return {layout.steps, layout.channels, layout.num_static, c.h_lstm, c.h1, c.h2};
}

nets::SequenceBatch gather_columns(const nets::SequenceBatch& all, std::span<const Eigen::Index> idx) {
  nets::SequenceBatch out;
  const auto B = static_cast<Eigen::Index>(idx.size());
  out.steps.reserve(all.steps.size());
  for (const auto& step : all.steps) {
    Matrix m(step.rows(), B);
    for (Eigen::Index b = 0; b < B; ++b) m.col(b) = step.col(idx[static_cast<std::size_t>(b)]);
    out.steps.push_back(std::move(m));
  }
  out.statics.resize(all.statics.rows(), B);
  for (Eigen::Index b = 0; b < B; ++b) out.statics.col(b) = all.statics.col(idx[static_cast<std::size_t>(b)]);
  return out;
}

// Mini-batch ADAM with per-epoch shuffling and training-loss patience.
template <class LossFn>
void train(TrainedForecaster& model, Eigen::Index n, const LossFn& batch_loss) {
  const auto& cfg = model.config;
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  AdamState adam(model.params.size());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Vector grad(model.params.size());

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch) {
      const auto len = std::min<Eigen::Index>(cfg.batch, n - start);
      std::span<const Eigen::Index> idx(order.data() + start, static_cast<std::size_t>(len));
      const double loss = batch_loss(idx, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw Error(ErrorCode::NonFiniteLoss, "training diverged at epoch " + std::to_string(epoch + 1));
      }
      total += loss * static_cast<double>(len);
      adam_step(model.params, grad, adam);
    }
    const double epoch_loss = total / static_cast<double>(n);
    model.loss_curve.push_back(epoch_loss);
    if (epoch_loss < best) {
      best = epoch_loss;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
}

}  // namespace

Eigen::Index parameter_count(const ForecasterConfig& config, const InputLayout& layout) {
  switch (config.kind) {
    case ModelKind::LR: return static_cast<Eigen::Index>(layout.slot.size()) + 1;
    case ModelKind::MLP: return mlp_shape(config, layout).parameter_count();
    case ModelKind::LSTM: return lstm_shape(config, layout).parameter_count();
  }
  return 0;
}

TrainedForecaster fit(const ForecasterConfig& config, const Matrix& X, const Vector& y,
                      const SelectionMask& mask, const FeatureSpec& spec) {
  config.validate();
  mask.validate(spec.size());
  if (static_cast<std::size_t>(X.cols()) != mask.size()) {
    throw Error(ErrorCode::MaskMismatch, "training matrix width does not match the mask");
  }
  if (X.rows() != y.size()) throw Error(ErrorCode::ShapeMismatch, "X and y row counts differ");
  if (X.rows() < 1) throw Error(ErrorCode::EmptyTrainingSet, "no training rows");

  TrainedForecaster model;
  model.config = config;
  model.mask = mask;
  model.layout = InputLayout::make(spec, mask);
  Rng init_rng(derive_seed(config.seed, 1));

  switch (config.kind) {
    case ModelKind::LR: {
      const auto lin = least_squares(X, y);
      model.params.resize(lin.weights.size() + 1);
      model.params << lin.weights, lin.intercept;
      break;
    }
    case ModelKind::MLP: {
      const auto shape = mlp_shape(config, model.layout);
      model.params = nets::mlp_init(shape, init_rng);
      train(model, X.rows(), [&](std::span<const Eigen::Index> idx, Vector* grad) {
        Matrix xb(static_cast<Eigen::Index>(idx.size()), X.cols());
        Vector yb(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
          xb.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
          yb[static_cast<Eigen::Index>(i)] = y[idx[i]];
        }
        return nets::mlp_loss(shape, model.params, xb, yb, grad);
      });
      break;
    }
    case ModelKind::LSTM: {
      const auto shape = lstm_shape(config, model.layout);
      model.params = nets::lstm_init(shape, init_rng);
      const auto all = to_sequences(model.layout, X);
      train(model, X.rows(), [&](std::span<const Eigen::Index> idx, Vector* grad) {
        Vector yb(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) yb[static_cast<Eigen::Index>(i)] = y[idx[i]];
        return nets::lstm_loss(shape, model.params, gather_columns(all, idx), yb, grad);
      });
      break;
    }
  }
  return model;
}

Vector predict(const TrainedForecaster& model, const Matrix& X) {
  if (static_cast<std::size_t>(X.cols()) != model.mask.size()) {
    throw Error(ErrorCode::MaskMismatch, "predict: expected " + std::to_string(model.mask.size()) +
                                             " columns, got " + std::to_string(X.cols()));
  }
  switch (model.config.kind) {
    case ModelKind::LR: {
      const auto n = model.params.size() - 1;
      return (X * model.params.head(n)).array() + model.params[n];
    }
    case ModelKind::MLP:
      return nets::mlp_forward(mlp_shape(model.config, model.layout), model.params, X);
    case ModelKind::LSTM:
      return nets::lstm_forward(lstm_shape(model.config, model.layout), model.params,
                                to_sequences(model.layout, X));
  }
  return {};
}

std::vector<ForecasterConfig> architecture_grid(const ForecasterConfig& base, bool tie_dense) {
  std::vector<ForecasterConfig> grid;
  auto c = base;
  switch (base.kind) {
    case ModelKind::LR:
      grid.push_back(c);
      break;
    case ModelKind::MLP:
      for (int a : kHiddenSizes) {
        for (int b : kHiddenSizes) {
          c.n1 = a;
          c.n2 = b;
          grid.push_back(c);
        }
      }
      break;
    case ModelKind::LSTM:
      for (int h : kHiddenSizes) {
        for (int a : kHiddenSizes) {
          for (int b : kHiddenSizes) {
            if (tie_dense && a != b) continue;
            c.h_lstm = h;
            c.h1 = a;
            c.h2 = b;
            grid.push_back(c);
          }
        }
      }
      break;
  }
  return grid;
}

GridSearchResult grid_search(std::span<const ForecasterConfig> grid, const InputLayout& layout,
                             const std::function<std::optional<double>(const ForecasterConfig&)>& score) {
  GridSearchResult result;
  std::optional<std::size_t> best;
  auto key = [](const ForecasterConfig& c) {
    return c.kind == ModelKind::MLP ? std::array<int, 3>{c.n1, c.n2, 0}
                                    : std::array<int, 3>{c.h_lstm, c.h1, c.h2};
  };
  for (const auto& cfg : grid) {
    auto s = score(cfg);
    if (s && !std::isfinite(*s)) s.reset();
    result.scores.emplace_back(cfg, s);
    if (!s) continue;
    if (!best) {
      best = result.scores.size() - 1;
      continue;
    }
    const auto& [bc, bs] = result.scores[*best];
    bool better = *s > *bs;
    if (*s == *bs) {
      const auto pc = parameter_count(cfg, layout), pb = parameter_count(bc, layout);
      better = pc < pb || (pc == pb && key(cfg) < key(bc));
    }
    if (better) best = result.scores.size() - 1;
  }
  if (!best) throw Error(ErrorCode::AllCellsFailed, "every architecture failed");
  result.best = result.scores[*best].first;
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string serialize_model(const TrainedForecaster& m) {
  json j;
  j["format"] = "epifc-model";
  j["version"] = kModelFormatVersion;
  const auto& c = m.config;
  j["config"] = {{"kind", to_string(c.kind)}, {"n1", c.n1},         {"n2", c.n2},
                 {"h_lstm", c.h_lstm},        {"h1", c.h1},         {"h2", c.h2},
                 {"batch", c.batch},          {"max_epochs", c.max_epochs},
                 {"patience", c.patience},    {"seed", c.seed},     {"standardize_lr", c.standardize_lr}};
  json mask = {{"method", to_string(m.mask.method)}, {"indices", m.mask.indices},
               {"fallback", m.mask.fallback}};
  if (m.mask.threshold) mask["threshold"] = *m.mask.threshold;
  if (m.mask.prefix_size) mask["prefix_size"] = *m.mask.prefix_size;
  if (m.mask.lambda) mask["lambda"] = *m.mask.lambda;
  if (m.mask.fold) mask["fold"] = *m.mask.fold;
  j["mask"] = mask;
  j["layout"] = {{"steps", m.layout.steps}, {"channels", m.layout.channels},
                 {"slot", m.layout.slot}, {"num_static", m.layout.num_static}};
  if (m.scaler) {
    j["scaler"] = {{"feature_mean", vec_json(m.scaler->feature_mean)},
                   {"feature_sd", vec_json(m.scaler->feature_sd)},
                   {"target_mean", m.scaler->target_mean},
                   {"target_sd", m.scaler->target_sd}};
  }
  j["params"] = vec_json(m.params);
  j["loss_curve"] = m.loss_curve;
  return j.dump(1) + "\n";
}

TrainedForecaster deserialize_model(std::string_view text) {
  try {
    const auto j = json::parse(text);
    if (j.at("format") != "epifc-model") throw Error(ErrorCode::InvalidArgument, "not a model document");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::InvalidArgument, "unsupported model format version");
    }
    TrainedForecaster m;
    const auto& c = j.at("config");
    auto kind = parse_model_kind(c.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown model kind");
    m.config.kind = *kind;
    m.config.n1 = c.at("n1");
    m.config.n2 = c.at("n2");
    m.config.h_lstm = c.at("h_lstm");
    m.config.h1 = c.at("h1");
    m.config.h2 = c.at("h2");
    m.config.batch = c.at("batch");
    m.config.max_epochs = c.at("max_epochs");
    m.config.patience = c.at("patience");
    m.config.seed = c.at("seed");
    m.config.standardize_lr = c.at("standardize_lr");
    const auto& mk = j.at("mask");
    auto method = parse_selection_method(mk.at("method").get<std::string>());
    if (!method) throw Error(ErrorCode::InvalidArgument, "unknown selection method");
    m.mask.method = *method;
    m.mask.indices = mk.at("indices").get<std::vector<std::size_t>>();
    m.mask.fallback = mk.at("fallback");
    if (mk.contains("threshold")) m.mask.threshold = mk["threshold"].get<double>();
    if (mk.contains("prefix_size")) m.mask.prefix_size = mk["prefix_size"].get<std::size_t>();
    if (mk.contains("lambda")) m.mask.lambda = mk["lambda"].get<double>();
    if (mk.contains("fold")) m.mask.fold = mk["fold"].get<int>();
    const auto& lay = j.at("layout");
    m.layout.steps = lay.at("steps");
    m.layout.channels = lay.at("channels");
    m.layout.slot = lay.at("slot").get<std::vector<int>>();
    m.layout.num_static = lay.at("num_static");
    if (j.contains("scaler")) {
      const auto& s = j["scaler"];
      Scaler sc;
      sc.feature_mean = json_vec(s.at("feature_mean"));
      sc.feature_sd = json_vec(s.at("feature_sd"));
      sc.target_mean = s.at("target_mean").get<std::vector<double>>();
      sc.target_sd = s.at("target_sd").get<std::vector<double>>();
      m.scaler = std::move(sc);
    }
    m.params = json_vec(j.at("params"));
    m.loss_curve = j.at("loss_curve").get<std::vector<double>>();
    if (m.params.size() != parameter_count(m.config, m.layout)) {
      throw Error(ErrorCode::ShapeMismatch, "parameter vector does not match the architecture");
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("model document: ") + e.what());
  }
}

void save_model(const TrainedForecaster& model, const std::filesystem::path& path) {
  detail::write_text_file(path, serialize_model(model));
}

TrainedForecaster load_model(const std::filesystem::path& path) {
  return deserialize_model(detail::read_text_file(path));
}

}  // namespace epifc
