#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmavae/rng.hpp"

// Small dense-network substrate with hand-written reverse passes.
// Batched tensors are column-major with one record per column.
namespace dmavae::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

enum class Activation { Elu, Relu, Tanh };

std::string_view to_string(Activation act) noexcept;
Activation parse_activation(std::string_view text);

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

class Mlp {
 public:
  // Per-record intermediate values kept for the reverse pass.
  struct Tape {
    std::vector<Matrix> inputs;  // input to each layer
  };

  Mlp() = default;
  // dims = {input, hidden..., output}; the output layer is affine.
  Mlp(std::string name, std::vector<int> dims, Activation act = Activation::Elu);

  void init_uniform(Rng& rng);
  void zero_parameters();

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  Activation activation() const { return act_; }
  const std::string& name() const { return name_; }
  std::size_t layer_count() const { return weights_.size(); }

  Parameter& weight(std::size_t layer) { return weights_.at(layer); }
  Parameter& bias(std::size_t layer) { return biases_.at(layer); }
  const Parameter& weight(std::size_t layer) const { return weights_.at(layer); }
  const Parameter& bias(std::size_t layer) const { return biases_.at(layer); }

  Matrix forward(const Matrix& input) const;
  Matrix forward(const Matrix& input, Tape& tape) const;
  Vector operator()(const Vector& input) const { return forward(Matrix(input)).col(0); }

  // Accumulates parameter gradients and returns d(loss)/d(input).
  Matrix backward(const Tape& tape, const Matrix& grad_output);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  void check_input(const Matrix& input) const;

  std::string name_;
  std::vector<int> dims_{1, 1};
  Activation act_ = Activation::Elu;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Scalar reference forms.
Vector gaussian_reparam(const Vector& mu, const Vector& sigma, const Vector& eps);
double kl_std_normal(const Vector& mu, const Vector& sigma);
double bernoulli_nll(double logit, int target);
double gaussian_nll(double mu, double sigma, double target);
double categorical_nll(const Vector& logits, int target);

// A mean/log-variance head. Rows [0, d) of the raw output are means and rows
// [d, 2d) are unconstrained log-variances, clamped before exponentiation.
struct GaussianHead {
  Matrix mean;
  Matrix logvar;   // clamped
  Matrix active;   // 1 where the clamp is inactive (gradient passes), else 0

  Matrix sigma() const { return (0.5 * logvar.array()).exp().matrix(); }
  Matrix variance() const { return logvar.array().exp().matrix(); }
};

GaussianHead split_gaussian_head(const Matrix& raw);

// Stacks d(loss)/d(mean) and d(loss)/d(clamped logvar) back into a raw-output
// gradient, zeroing the log-variance part where the clamp was active.
Matrix join_gaussian_grad(const GaussianHead& head, const Matrix& d_mean, const Matrix& d_logvar);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  // Applies one bias-corrected update from the gradients currently stored in
  // the bound parameters.
  void step();

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

// Evaluates the loss; when `with_grad` is true it must also leave fresh
// gradients in every checked parameter.
using LossFn = std::function<double(bool with_grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Central finite differences against the analytic gradient. The relative
// error of an entry is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const LossFn& loss_fn, std::span<Parameter* const> params,
                           double h = 1e-5, double floor = 1e-4);

bool all_finite(const Matrix& m);

}  // namespace dmavae::nn
