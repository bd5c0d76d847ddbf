#include "dmavae/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmavae/error.hpp"

namespace dmavae::nn {

std::string_view to_string(Activation act) noexcept {
  switch (act) {
    case Activation::Elu: return "elu";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "elu";
}

Activation parse_activation(std::string_view text) {
  if (text == "elu") return Activation::Elu;
  if (text == "relu") return Activation::Relu;
  if (text == "tanh") return Activation::Tanh;
  fail(ErrorKind::Config, "unknown activation '" + std::string(text) + "'");
}

namespace {

void activate(Matrix& x, Activation act) {
  switch (act) {
    case Activation::Elu:
      x = (x.array() > 0).select(x.array(), x.array().exp() - 1.0).matrix();
      break;
    case Activation::Relu:
      x = x.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      x = x.array().tanh().matrix();
      break;
  }
}

// Derivative of the activation expressed through its output; all three are
// monotone with out > 0 exactly where pre > 0.
void scale_by_activation_grad(Matrix& g, const Matrix& out, Activation act) {
  switch (act) {
    case Activation::Elu:
      g.array() *= (out.array() > 0).select(1.0, out.array() + 1.0);
      break;
    case Activation::Relu:
      g.array() *= (out.array() > 0).cast<double>();
      break;
    case Activation::Tanh:
      g.array() *= 1.0 - out.array().square();
      break;
  }
}

}  // namespace

Mlp::Mlp(std::string name, std::vector<int> dims, Activation act)
    : name_(std::move(name)), dims_(std::move(dims)), act_(act) {
  require(dims_.size() >= 2, ErrorKind::Shape, name_ + ": an MLP needs at least input and output dims");
  for (int d : dims_) require(d >= 1, ErrorKind::Shape, name_ + ": layer dims must be >= 1");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    const std::string tag = name_ + ".l" + std::to_string(l);
    weights_.push_back({tag + ".w", Matrix::Zero(dims_[l + 1], dims_[l]), Matrix::Zero(dims_[l + 1], dims_[l])});
    biases_.push_back({tag + ".b", Matrix::Zero(dims_[l + 1], 1), Matrix::Zero(dims_[l + 1], 1)});
  }
}

void Mlp::init_uniform(Rng& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double fan_in = dims_[l];
    const double fan_out = dims_[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix& w = weights_[l].value;
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    biases_[l].value.setZero();
  }
}

void Mlp::zero_parameters() {
  for (auto& w : weights_) w.value.setZero();
  for (auto& b : biases_) b.value.setZero();
}

void Mlp::check_input(const Matrix& input) const {
  if (input.rows() != input_dim()) {
    std::ostringstream os;
    os << name_ << ": input has " << input.rows() << " rows, expected " << input_dim();
    fail(ErrorKind::Shape, os.str());
  }
}

Matrix Mlp::forward(const Matrix& input) const {
  check_input(input);
  Matrix a = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix h = weights_[l].value * a;
    h.colwise() += biases_[l].value.col(0);
    if (l + 1 < weights_.size()) activate(h, act_);
    a = std::move(h);
  }
  return a;
}

Matrix Mlp::forward(const Matrix& input, Tape& tape) const {
  check_input(input);
  tape.inputs.clear();
  tape.inputs.reserve(weights_.size());
  Matrix a = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix h = weights_[l].value * a;
    h.colwise() += biases_[l].value.col(0);
    tape.inputs.push_back(std::move(a));
    if (l + 1 < weights_.size()) activate(h, act_);
    a = std::move(h);
  }
  return a;
}

Matrix Mlp::backward(const Tape& tape, const Matrix& grad_output) {
  require(tape.inputs.size() == weights_.size(), ErrorKind::Shape, name_ + ": tape does not match network");
  require(grad_output.rows() == output_dim(), ErrorKind::Shape, name_ + ": output gradient has wrong row count");
  Matrix g = grad_output;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    weights_[l].grad.noalias() += g * tape.inputs[l].transpose();
    biases_[l].grad += g.rowwise().sum();
    Matrix back = weights_[l].value.transpose() * g;
    if (l > 0) scale_by_activation_grad(back, tape.inputs[l], act_);
    g = std::move(back);
  }
  return g;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

Vector gaussian_reparam(const Vector& mu, const Vector& sigma, const Vector& eps) {
  require(mu.size() == sigma.size() && mu.size() == eps.size(), ErrorKind::Shape,
          "gaussian_reparam: mu, sigma and eps must have equal length");
  require((sigma.array() > 0).all(), ErrorKind::Domain, "gaussian_reparam: sigma must be > 0");
  return mu + sigma.cwiseProduct(eps);
}

double kl_std_normal(const Vector& mu, const Vector& sigma) {
  require(mu.size() == sigma.size(), ErrorKind::Shape, "kl_std_normal: length mismatch");
  require((sigma.array() > 0).all(), ErrorKind::Domain, "kl_std_normal: sigma must be > 0");
  const auto var = sigma.array().square();
  return 0.5 * (mu.array().square() + var - 1.0 - var.log()).sum();
}

double bernoulli_nll(double logit, int target) {
  require(target == 0 || target == 1, ErrorKind::Domain, "bernoulli_nll: target must be 0 or 1");
  // -[y log p + (1-y) log(1-p)] = softplus(logit) - y * logit
  return softplus(logit) - target * logit;
}

double gaussian_nll(double mu, double sigma, double target) {
  require(sigma > 0, ErrorKind::Domain, "gaussian_nll: sigma must be > 0");
  const double r = target - mu;
  return kHalfLog2Pi + std::log(sigma) + r * r / (2.0 * sigma * sigma);
}

double categorical_nll(const Vector& logits, int target) {
  require(target >= 0 && target < logits.size(), ErrorKind::Domain, "categorical_nll: target out of range");
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return lse - logits(target);
}

GaussianHead split_gaussian_head(const Matrix& raw) {
  require(raw.rows() % 2 == 0, ErrorKind::Shape, "gaussian head needs an even row count");
  const Eigen::Index d = raw.rows() / 2;
  GaussianHead head;
  head.mean = raw.topRows(d);
  const Matrix lv = raw.bottomRows(d);
  head.logvar = lv.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
  head.active = lv.unaryExpr([](double v) { return (v > kLogVarMin && v < kLogVarMax) ? 1.0 : 0.0; });
  return head;
}

Matrix join_gaussian_grad(const GaussianHead& head, const Matrix& d_mean, const Matrix& d_logvar) {
  Matrix out(2 * d_mean.rows(), d_mean.cols());
  out.topRows(d_mean.rows()) = d_mean;
  out.bottomRows(d_mean.rows()) = d_logvar.cwiseProduct(head.active);
  return out;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  require(config_.lr > 0, ErrorKind::Config, "adam: learning rate must be > 0");
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!all_finite(p->grad)) fail(ErrorKind::Training, "non-finite gradient in parameter " + p->name);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

GradCheckResult grad_check(const LossFn& loss_fn, std::span<Parameter* const> params, double h,
                           double floor) {
  require(h > 0, ErrorKind::Argument, "grad_check: h must be > 0");
  for (Parameter* p : params) p->grad.setZero();
  loss_fn(true);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& entry = p.value.data()[i];
      const double saved = entry;
      entry = saved + h;
      const double up = loss_fn(false);
      entry = saved - h;
      const double down = loss_fn(false);
      entry = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k].data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.entries_checked;
      if (result.worst_index < 0 || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace dmavae::nn
