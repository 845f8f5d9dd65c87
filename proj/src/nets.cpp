#include "epifc/nets.hpp"

#include <cmath>

#include "epifc/error.hpp"

namespace epifc::nets {

namespace {

using Map = Eigen::Map<const Matrix>;
using VMap = Eigen::Map<const Vector>;
using MutMap = Eigen::Map<Matrix>;
using MutVMap = Eigen::Map<Vector>;

// Sequential reader/writer over a flat parameter vector.
template <class Vec, class M, class V>
struct Cursor {
  Vec& data;
  Eigen::Index offset = 0;

  M mat(Eigen::Index rows, Eigen::Index cols) {
    M m(data.data() + offset, rows, cols);
    offset += rows * cols;
    return m;
  }
  V vec(Eigen::Index n) {
    V v(data.data() + offset, n);
    offset += n;
    return v;
  }
};
using Reader = Cursor<const Vector, Map, VMap>;
using Writer = Cursor<Vector, MutMap, MutVMap>;

void glorot(MutMap w, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
  }
}

// tanh through the vectorized exp: 1 - 2 / (e^{2z} + 1). Saturates cleanly
// at +-1 when the exponential overflows or underflows.
template <typename Derived>
Eigen::ArrayXXd tanh_array(const Eigen::ArrayBase<Derived>& z) {
  return 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
}

template <typename Derived>
Matrix tanh_of(const Eigen::MatrixBase<Derived>& z) { return tanh_array(z.array()).matrix(); }

template <typename Derived>
Matrix sigmoid_of(const Eigen::MatrixBase<Derived>& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

}  // namespace

// ---------------------------------------------------------------------------
// MLP

Eigen::Index MlpShape::parameter_count() const {
  return static_cast<Eigen::Index>(hidden1) * inputs + hidden1 +
         static_cast<Eigen::Index>(hidden2) * hidden1 + hidden2 + hidden2 + 1;
}

Vector mlp_init(const MlpShape& s, Rng& rng) {
  Vector p = Vector::Zero(s.parameter_count());
  Writer w{p};
  glorot(w.mat(s.hidden1, s.inputs), s.inputs, s.hidden1, rng);
  w.vec(s.hidden1);
  glorot(w.mat(s.hidden2, s.hidden1), s.hidden1, s.hidden2, rng);
  w.vec(s.hidden2);
  glorot(w.mat(1, s.hidden2), s.hidden2, 1, rng);
  return p;
}

namespace {

struct MlpActivations {
  Matrix a1, a2;
  Eigen::RowVectorXd out;
};

MlpActivations mlp_run(const MlpShape& s, const Vector& params, const Matrix& X) {
  if (params.size() != s.parameter_count()) throw Error(ErrorCode::ShapeMismatch, "mlp: parameter count");
  if (X.cols() != s.inputs) throw Error(ErrorCode::ShapeMismatch, "mlp: input width");
  Reader r{params};
  const auto W1 = r.mat(s.hidden1, s.inputs);
  const auto b1 = r.vec(s.hidden1);
  const auto W2 = r.mat(s.hidden2, s.hidden1);
  const auto b2 = r.vec(s.hidden2);
  const auto W3 = r.mat(1, s.hidden2);
  const double b3 = r.vec(1)[0];
  MlpActivations a;
  a.a1 = tanh_of((W1 * X.transpose()).colwise() + b1);
  a.a2 = tanh_of((W2 * a.a1).colwise() + b2);
  a.out = (W3 * a.a2).array() + b3;
  return a;
}

}  // namespace

Vector mlp_forward(const MlpShape& s, const Vector& params, const Matrix& X) {
  return mlp_run(s, params, X).out.transpose();
}

double mlp_loss(const MlpShape& s, const Vector& params, const Matrix& X, const Vector& y,
                Vector* grad) {
  const auto a = mlp_run(s, params, X);
  const double B = static_cast<double>(X.rows());
  const Eigen::RowVectorXd err = a.out - y.transpose();
  const double loss = err.squaredNorm() / B;
  if (!grad) return loss;

  Reader r{params};
  r.mat(s.hidden1, s.inputs);
  r.vec(s.hidden1);
  const auto W2 = r.mat(s.hidden2, s.hidden1);
  r.vec(s.hidden2);
  const auto W3 = r.mat(1, s.hidden2);

  grad->setZero(params.size());
  Writer g{*grad};
  auto gW1 = g.mat(s.hidden1, s.inputs);
  auto gb1 = g.vec(s.hidden1);
  auto gW2 = g.mat(s.hidden2, s.hidden1);
  auto gb2 = g.vec(s.hidden2);
  auto gW3 = g.mat(1, s.hidden2);
  auto gb3 = g.vec(1);

  const Eigen::RowVectorXd dout = (2.0 / B) * err;
  gW3 = dout * a.a2.transpose();
  gb3[0] = dout.sum();
  const Matrix dz2 = ((W3.transpose() * dout).array() * (1.0 - a.a2.array().square())).matrix();
  gW2 = dz2 * a.a1.transpose();
  gb2 = dz2.rowwise().sum();
  const Matrix dz1 = ((W2.transpose() * dz2).array() * (1.0 - a.a1.array().square())).matrix();
  gW1 = dz1 * X;
  gb1 = dz1.rowwise().sum();
  return loss;
}

// ---------------------------------------------------------------------------
// LSTM

Eigen::Index LstmShape::parameter_count() const {
  const Eigen::Index h = hidden;
  return 4 * h * channels + 4 * h * h + 4 * h + static_cast<Eigen::Index>(dense1) * (h + statics) +
         dense1 + static_cast<Eigen::Index>(dense2) * dense1 + dense2 + dense2 + 1;
}

Vector lstm_init(const LstmShape& s, Rng& rng) {
  Vector p = Vector::Zero(s.parameter_count());
  Writer w{p};
  const Eigen::Index h = s.hidden;
  glorot(w.mat(4 * h, s.channels), s.channels, 4 * s.hidden, rng);

  // Orthonormal columns from the QR factorization of a Gaussian matrix.
  Matrix gauss(4 * h, h);
  for (Eigen::Index j = 0; j < h; ++j) {
    for (Eigen::Index i = 0; i < 4 * h; ++i) gauss(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(gauss);
  Matrix q = qr.householderQ() * Matrix::Identity(4 * h, h);
  const Matrix R = qr.matrixQR().topRows(h).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < h; ++j) {
    if (R(j, j) < 0) q.col(j) = -q.col(j);
  }
  w.mat(4 * h, h) = q;

  auto bias = w.vec(4 * h);
  bias.segment(h, h).setOnes();  // forget gate
  glorot(w.mat(s.dense1, h + s.statics), s.hidden + s.statics, s.dense1, rng);
  w.vec(s.dense1);
  glorot(w.mat(s.dense2, s.dense1), s.dense1, s.dense2, rng);
  w.vec(s.dense2);
  glorot(w.mat(1, s.dense2), s.dense2, 1, rng);
  return p;
}

namespace {

struct LstmCache {
  std::vector<Matrix> gates;   // per step, 4h x B, activated
  std::vector<Matrix> cells;   // cells[t + 1] = c_t, cells[0] = 0
  std::vector<Matrix> hidden;  // hidden[t + 1] = h_t, hidden[0] = 0
  std::vector<Matrix> cell_tanh;  // tanh(c_t) per step
  Matrix u;                    // [h_T; statics]
  Matrix a1, a2;
  Eigen::RowVectorXd out;
};

LstmCache lstm_run(const LstmShape& s, const Vector& params, const SequenceBatch& batch) {
  if (params.size() != s.parameter_count()) throw Error(ErrorCode::ShapeMismatch, "lstm: parameter count");
  if (static_cast<int>(batch.steps.size()) != s.steps || batch.statics.rows() != s.statics) {
    throw Error(ErrorCode::ShapeMismatch, "lstm: batch layout");
  }
  const Eigen::Index h = s.hidden;
  const Eigen::Index B = batch.size();
  Reader r{params};
  const auto Wx = r.mat(4 * h, s.channels);
  const auto Wh = r.mat(4 * h, h);
  const auto b = r.vec(4 * h);
  const auto D1 = r.mat(s.dense1, h + s.statics);
  const auto c1 = r.vec(s.dense1);
  const auto D2 = r.mat(s.dense2, s.dense1);
  const auto c2 = r.vec(s.dense2);
  const auto Wo = r.mat(1, s.dense2);
  const double bo = r.vec(1)[0];

  LstmCache c;
  c.cells.push_back(Matrix::Zero(h, B));
  c.hidden.push_back(Matrix::Zero(h, B));
  for (int t = 0; t < s.steps; ++t) {
    const auto& xt = batch.steps[static_cast<std::size_t>(t)];
    if (xt.rows() != s.channels || xt.cols() != B) throw Error(ErrorCode::ShapeMismatch, "lstm: step shape");
    Matrix z = (Wx * xt + Wh * c.hidden.back()).colwise() + b;
    Matrix act(4 * h, B);
    act.topRows(h) = sigmoid_of(z.topRows(h));
    act.middleRows(h, h) = sigmoid_of(z.middleRows(h, h));
    act.middleRows(2 * h, h) = tanh_of(z.middleRows(2 * h, h));
    act.bottomRows(h) = sigmoid_of(z.bottomRows(h));
    Matrix cell = (act.middleRows(h, h).array() * c.cells.back().array() +
                   act.topRows(h).array() * act.middleRows(2 * h, h).array())
                      .matrix();
    Matrix tc = tanh_of(cell);
    Matrix hid = (act.bottomRows(h).array() * tc.array()).matrix();
    c.cell_tanh.push_back(std::move(tc));
    c.gates.push_back(std::move(act));
    c.cells.push_back(std::move(cell));
    c.hidden.push_back(std::move(hid));
  }
  c.u.resize(h + s.statics, B);
  c.u.topRows(h) = c.hidden.back();
  c.u.bottomRows(s.statics) = batch.statics;
  c.a1 = tanh_of((D1 * c.u).colwise() + c1);
  c.a2 = tanh_of((D2 * c.a1).colwise() + c2);
  c.out = (Wo * c.a2).array() + bo;
  return c;
}

}  // namespace

Vector lstm_forward(const LstmShape& s, const Vector& params, const SequenceBatch& batch) {
  return lstm_run(s, params, batch).out.transpose();
}

double lstm_loss(const LstmShape& s, const Vector& params, const SequenceBatch& batch,
                 const Vector& y, Vector* grad) {
  const auto c = lstm_run(s, params, batch);
  const double B = static_cast<double>(batch.size());
  const Eigen::RowVectorXd err = c.out - y.transpose();
  const double loss = err.squaredNorm() / B;
  if (!grad) return loss;

  const Eigen::Index h = s.hidden;
  Reader r{params};
  r.mat(4 * h, s.channels);
  const auto Wh = r.mat(4 * h, h);
  r.vec(4 * h);
  const auto D1 = r.mat(s.dense1, h + s.statics);
  r.vec(s.dense1);
  const auto D2 = r.mat(s.dense2, s.dense1);
  r.vec(s.dense2);
  const auto Wo = r.mat(1, s.dense2);

  grad->setZero(params.size());
  Writer g{*grad};
  auto gWx = g.mat(4 * h, s.channels);
  auto gWh = g.mat(4 * h, h);
  auto gb = g.vec(4 * h);
  auto gD1 = g.mat(s.dense1, h + s.statics);
  auto gc1 = g.vec(s.dense1);
  auto gD2 = g.mat(s.dense2, s.dense1);
  auto gc2 = g.vec(s.dense2);
  auto gWo = g.mat(1, s.dense2);
  auto gbo = g.vec(1);

  const Eigen::RowVectorXd dout = (2.0 / B) * err;
  gWo = dout * c.a2.transpose();
  gbo[0] = dout.sum();
  const Matrix dz2 = ((Wo.transpose() * dout).array() * (1.0 - c.a2.array().square())).matrix();
  gD2 = dz2 * c.a1.transpose();
  gc2 = dz2.rowwise().sum();
  const Matrix dz1 = ((D2.transpose() * dz2).array() * (1.0 - c.a1.array().square())).matrix();
  gD1 = dz1 * c.u.transpose();
  gc1 = dz1.rowwise().sum();
  Matrix dh = (D1.transpose() * dz1).topRows(h);

  Matrix dc = Matrix::Zero(h, batch.size());
  Matrix dz(4 * h, batch.size());
  for (int t = s.steps - 1; t >= 0; --t) {
    const auto st = static_cast<std::size_t>(t);
    const auto& act = c.gates[st];
    const auto i = act.topRows(h).array();
    const auto f = act.middleRows(h, h).array();
    const auto gg = act.middleRows(2 * h, h).array();
    const auto o = act.bottomRows(h).array();
    const auto tc = c.cell_tanh[st].array();

    dc.array() += dh.array() * o * (1.0 - tc.square());
    dz.topRows(h) = (dc.array() * gg * i * (1.0 - i)).matrix();
    dz.middleRows(h, h) = (dc.array() * c.cells[st].array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * h, h) = (dc.array() * i * (1.0 - gg.square())).matrix();
    dz.bottomRows(h) = (dh.array() * tc * o * (1.0 - o)).matrix();

    gWx.noalias() += dz * batch.steps[st].transpose();
    gWh.noalias() += dz * c.hidden[st].transpose();
    gb += dz.rowwise().sum();
    dh.noalias() = Wh.transpose() * dz;
    dc.array() *= f;
  }
  return loss;
}

}  // namespace epifc::nets
