#pragma once

// Network math behind the MLP and LSTM forecasters. Parameters live in one
// flat vector so the optimizer, gradient checker and serializer can treat
// every model the same way.

#include <Eigen/Dense>
#include <vector>

#include "epifc/rng.hpp"

namespace epifc::nets {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Two-hidden-layer tanh perceptron with a linear output.

struct MlpShape {
  int inputs = 0;
  int hidden1 = 4;
  int hidden2 = 4;

  Eigen::Index parameter_count() const;
};

Vector mlp_init(const MlpShape& shape, Rng& rng);

/// Outputs for the rows of X (B x inputs).
Vector mlp_forward(const MlpShape& shape, const Vector& params, const Matrix& X);

/// Batch MSE; fills `grad` with its exact gradient when non-null.
double mlp_loss(const MlpShape& shape, const Vector& params, const Matrix& X, const Vector& y,
                Vector* grad);

// ---------------------------------------------------------------------------
// One LSTM layer over `steps` time steps of `channels` inputs, whose final
// hidden state is concatenated with `statics` extra inputs and passed through
// two tanh dense layers and a linear output. Gate order is i, f, g, o.

struct LstmShape {
  int steps = 14;
  int channels = 3;
  int statics = 0;
  int hidden = 4;
  int dense1 = 4;
  int dense2 = 4;

  Eigen::Index parameter_count() const;
};

/// A batch laid out for the recurrence: one channels x B matrix per step
/// (oldest step first) and a statics x B matrix.
struct SequenceBatch {
  std::vector<Matrix> steps;
  Matrix statics;

  Eigen::Index size() const { return statics.cols(); }
};

Vector lstm_init(const LstmShape& shape, Rng& rng);

Vector lstm_forward(const LstmShape& shape, const Vector& params, const SequenceBatch& batch);

double lstm_loss(const LstmShape& shape, const Vector& params, const SequenceBatch& batch,
                 const Vector& y, Vector* grad);

}  // namespace epifc::nets
