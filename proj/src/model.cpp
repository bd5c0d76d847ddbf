#include "dmavae/model.hpp"

#include <numeric>
#include <sstream>

#include "dmavae/error.hpp"

namespace dmavae::model {

using nn::kHalfLog2Pi;

std::string_view to_string(Architecture arch) noexcept {
  return arch == Architecture::Dmavae ? "dmavae" : "cmavae";
}

Architecture parse_architecture(std::string_view text) {
  if (text == "dmavae") return Architecture::Dmavae;
  if (text == "cmavae") return Architecture::Cmavae;
  fail(ErrorKind::Config, "unknown architecture '" + std::string(text) + "'");
}

void validate(const ModelConfig& c) {
  require(c.x_dim >= 1, ErrorKind::Config, "x_dim must be >= 1");
  if (c.architecture == Architecture::Dmavae) {
    require(c.dim_tm >= 1 && c.dim_my >= 1 && c.dim_ty >= 1, ErrorKind::Config, "latent dims must be >= 1");
  } else {
    require(c.dim_z >= 1, ErrorKind::Config, "latent dim must be >= 1");
  }
  require(c.y_kind != VarKind::Categorical, ErrorKind::Config, "categorical outcomes are not supported");
  if (c.m_kind == VarKind::Categorical)
    require(c.m_classes >= 2, ErrorKind::Config, "categorical mediator needs m_classes >= 2");
  for (int h : c.hidden) require(h >= 1, ErrorKind::Config, "hidden widths must be >= 1");
  require(c.aux_weight >= 0 && std::isfinite(c.aux_weight), ErrorKind::Config, "aux_weight must be finite and >= 0");
}

int Layout::block_index(const std::string& name) const {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].name == name) return static_cast<int>(i);
  return -1;
}

Layout dmavae_layout(int dim_tm, int dim_my, int dim_ty) {
  Layout l;
  l.blocks = {{"TM", dim_tm}, {"MY", dim_my}, {"TY", dim_ty}};
  l.t_inputs = {0, 2};
  l.m_inputs = {0, 1};
  l.y_inputs = {2, 1};
  l.x_inputs = {0, 2, 1};
  return l;
}

Layout cmavae_layout(int dim_z) {
  Layout l;
  l.blocks = {{"Z", dim_z}};
  l.t_inputs = l.m_inputs = l.y_inputs = l.x_inputs = {0};
  return l;
}

namespace {

int width(const Layout& l, const std::vector<int>& blocks) {
  int w = 0;
  for (int b : blocks) w += l.blocks.at(b).dim;
  return w;
}

std::vector<int> net_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

int mediator_output_dim(const ModelConfig& c) {
  switch (c.m_kind) {
    case VarKind::Continuous: return 2;
    case VarKind::Binary: return 1;
    case VarKind::Categorical: return c.m_classes;
  }
  return 2;
}

DistParams to_dist(VarKind kind, const Matrix& raw) {
  DistParams p;
  p.kind = kind;
  if (kind == VarKind::Continuous) {
    const nn::GaussianHead h = nn::split_gaussian_head(raw);
    p.mean = h.mean;
    p.sigma = h.sigma();
  } else {
    p.logits = raw;
  }
  return p;
}

std::vector<int> arm_indices(const std::vector<int>& t, int arm) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] == arm) idx.push_back(static_cast<int>(i));
  return idx;
}

// Negative log-likelihood summed over columns, with its gradient w.r.t. the raw
// decoder output scaled by `scale`.
double nll_and_grad(VarKind kind, const Matrix& raw, const RowVector& target, double scale, Matrix* grad) {
  const Eigen::Index n = raw.cols();
  double total = 0.0;
  switch (kind) {
    case VarKind::Continuous: {
      const nn::GaussianHead h = nn::split_gaussian_head(raw);
      const Eigen::ArrayXXd var = h.logvar.array().exp();
      const Eigen::ArrayXXd r = target.array() - h.mean.array().row(0);
      const Eigen::ArrayXXd r2 = r.square();
      total = (kHalfLog2Pi + 0.5 * h.logvar.array() + r2 / (2.0 * var)).sum();
      if (grad) {
        const Matrix d_mean = (-scale * r / var).matrix();
        const Matrix d_lv = (scale * (0.5 - r2 / (2.0 * var))).matrix();
        *grad = nn::join_gaussian_grad(h, d_mean, d_lv);
      }
      break;
    }
    case VarKind::Binary: {
      if (grad) grad->resize(1, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double l = raw(0, i);
        total += nn::softplus(l) - target(i) * l;
        if (grad) (*grad)(0, i) = scale * (nn::logistic(l) - target(i));
      }
      break;
    }
    case VarKind::Categorical: {
      if (grad) grad->resize(raw.rows(), n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int cls = static_cast<int>(target(i));
        const double top = raw.col(i).maxCoeff();
        const Eigen::ArrayXd e = (raw.col(i).array() - top).exp();
        const double sum = e.sum();
        total += top + std::log(sum) - raw(cls, i);
        if (grad) {
          grad->col(i) = (scale * e / sum).matrix();
          (*grad)(cls, i) -= scale;
        }
      }
      break;
    }
  }
  return total;
}

}  // namespace

LatentModel::LatentModel(ModelConfig config, Layout layout)
    : config_(std::move(config)), layout_(std::move(layout)) {
  validate(config_);
  require(!layout_.blocks.empty(), ErrorKind::Config, "layout needs at least one latent block");
  for (const auto& b : layout_.blocks) require(b.dim >= 1, ErrorKind::Config, "latent dims must be >= 1");
  for (const auto* list : {&layout_.t_inputs, &layout_.m_inputs, &layout_.y_inputs, &layout_.x_inputs}) {
    require(!list->empty(), ErrorKind::Config, "every decoder needs at least one latent input");
    for (int b : *list)
      require(b >= 0 && b < static_cast<int>(layout_.blocks.size()), ErrorKind::Config, "bad block index in layout");
  }
  const auto& h = config_.hidden;
  const auto act = config_.activation;
  for (const auto& b : layout_.blocks)
    encoders_.emplace_back("enc_" + b.name, net_dims(config_.x_dim, h, 2 * b.dim), act);
  t_dec_ = nn::Mlp("dec_T", net_dims(width(layout_, layout_.t_inputs), h, 1), act);
  const int m_out = mediator_output_dim(config_);
  const int y_out = config_.y_kind == VarKind::Continuous ? 2 : 1;
  for (int arm = 0; arm < 2; ++arm) {
    m_dec_.emplace_back("dec_M" + std::to_string(arm), net_dims(width(layout_, layout_.m_inputs), h, m_out), act);
    y_dec_.emplace_back("dec_Y" + std::to_string(arm),
                        net_dims(mediator_feature_dim() + width(layout_, layout_.y_inputs), h, y_out), act);
  }
  x_dec_ = nn::Mlp("dec_X", net_dims(width(layout_, layout_.x_inputs), h, 2 * config_.x_dim), act);
  reinitialize(config_.seed);
}

void LatentModel::reinitialize(std::uint64_t seed) {
  config_.seed = seed;
  Rng rng = make_rng(seed, {0x696e6974ULL});
  for (auto& e : encoders_) e.init_uniform(rng);
  t_dec_.init_uniform(rng);
  for (auto& m : m_dec_) m.init_uniform(rng);
  for (auto& y : y_dec_) y.init_uniform(rng);
  x_dec_.init_uniform(rng);
}

void LatentModel::zero_parameters() {
  for (nn::Parameter* p : parameters()) p->value.setZero();
}

std::vector<nn::Parameter*> LatentModel::parameters() {
  std::vector<nn::Parameter*> out;
  auto append = [&](nn::Mlp& net) {
    for (nn::Parameter* p : net.parameters()) out.push_back(p);
  };
  for (auto& e : encoders_) append(e);
  append(t_dec_);
  for (auto& m : m_dec_) append(m);
  for (auto& y : y_dec_) append(y);
  append(x_dec_);
  return out;
}

std::vector<const nn::Parameter*> LatentModel::parameters() const {
  std::vector<const nn::Parameter*> out;
  for (nn::Parameter* p : const_cast<LatentModel*>(this)->parameters()) out.push_back(p);
  return out;
}

void LatentModel::zero_grad() {
  for (nn::Parameter* p : parameters()) p->grad.setZero();
}

int LatentModel::mediator_feature_dim() const {
  return config_.m_kind == VarKind::Categorical ? config_.m_classes : 1;
}

Matrix LatentModel::mediator_features(const RowVector& m) const {
  if (config_.m_kind != VarKind::Categorical) return m;
  Matrix onehot = Matrix::Zero(config_.m_classes, m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const int cls = static_cast<int>(m(i));
    require(cls >= 0 && cls < config_.m_classes, ErrorKind::Model, "mediator class index out of range");
    onehot(cls, i) = 1.0;
  }
  return onehot;
}

void LatentModel::check_latents(const Latents& z) const {
  require(z.size() == layout_.blocks.size(), ErrorKind::Shape, "latent sample has wrong block count");
  for (std::size_t b = 0; b < z.size(); ++b) {
    require(z[b].rows() == layout_.blocks[b].dim, ErrorKind::Shape,
            "latent block " + layout_.blocks[b].name + " has wrong dimension");
    require(z[b].cols() == z[0].cols(), ErrorKind::Shape, "latent blocks have different batch sizes");
  }
}

Matrix LatentModel::gather_input(const std::vector<int>& blocks, const Latents& z) const {
  Matrix in(width(layout_, blocks), z.front().cols());
  Eigen::Index row = 0;
  for (int b : blocks) {
    in.middleRows(row, z[b].rows()) = z[b];
    row += z[b].rows();
  }
  return in;
}

std::vector<Posterior> LatentModel::encode(const Matrix& x) const {
  require(x.rows() == config_.x_dim, ErrorKind::Shape, "encode: proxy dimension mismatch");
  std::vector<Posterior> out;
  for (const auto& enc : encoders_) {
    const nn::GaussianHead h = nn::split_gaussian_head(enc.forward(x));
    out.push_back({h.mean, h.logvar});
  }
  return out;
}

Latents LatentModel::sample(const std::vector<Posterior>& posteriors, const std::vector<Matrix>& eps) const {
  require(eps.size() == posteriors.size(), ErrorKind::Shape, "sample: one noise matrix per block required");
  Latents z;
  for (std::size_t b = 0; b < posteriors.size(); ++b) {
    require(eps[b].rows() == posteriors[b].mean.rows() && eps[b].cols() == posteriors[b].mean.cols(),
            ErrorKind::Shape, "sample: noise shape mismatch");
    z.push_back(posteriors[b].mean + posteriors[b].sigma().cwiseProduct(eps[b]));
  }
  return z;
}

RowVector LatentModel::decode_t(const Latents& z) const {
  check_latents(z);
  const Matrix logit = t_dec_.forward(gather_input(layout_.t_inputs, z));
  return logit.row(0).unaryExpr([](double l) { return nn::logistic(l); });
}

DistParams LatentModel::decode_m(int arm, const Latents& z) const {
  require(arm == 0 || arm == 1, ErrorKind::Argument, "treatment arm must be 0 or 1");
  check_latents(z);
  return to_dist(config_.m_kind, m_dec_[arm].forward(gather_input(layout_.m_inputs, z)));
}

DistParams LatentModel::decode_m(const std::vector<int>& t, const Latents& z) const {
  check_latents(z);
  require(static_cast<Eigen::Index>(t.size()) == z.front().cols(), ErrorKind::Shape, "decode_m: t length mismatch");
  const Matrix in = gather_input(layout_.m_inputs, z);
  Matrix raw(m_dec_[0].output_dim(), in.cols());
  for (int arm = 0; arm < 2; ++arm) {
    const auto idx = arm_indices(t, arm);
    raw(Eigen::all, idx) = m_dec_[arm].forward(in(Eigen::all, idx));
  }
  return to_dist(config_.m_kind, raw);
}

DistParams LatentModel::decode_y(int arm, const RowVector& m, const Latents& z) const {
  require(arm == 0 || arm == 1, ErrorKind::Argument, "treatment arm must be 0 or 1");
  check_latents(z);
  require(m.size() == z.front().cols(), ErrorKind::Shape, "decode_y: mediator length mismatch");
  Matrix in(mediator_feature_dim() + width(layout_, layout_.y_inputs), m.size());
  in << mediator_features(m), gather_input(layout_.y_inputs, z);
  return to_dist(config_.y_kind, y_dec_[arm].forward(in));
}

DistParams LatentModel::decode_y(const std::vector<int>& t, const RowVector& m, const Latents& z) const {
  check_latents(z);
  require(static_cast<Eigen::Index>(t.size()) == z.front().cols() && m.size() == z.front().cols(), ErrorKind::Shape,
          "decode_y: length mismatch");
  Matrix in(mediator_feature_dim() + width(layout_, layout_.y_inputs), m.size());
  in << mediator_features(m), gather_input(layout_.y_inputs, z);
  Matrix raw(y_dec_[0].output_dim(), in.cols());
  for (int arm = 0; arm < 2; ++arm) {
    const auto idx = arm_indices(t, arm);
    raw(Eigen::all, idx) = y_dec_[arm].forward(in(Eigen::all, idx));
  }
  return to_dist(config_.y_kind, raw);
}

nn::GaussianHead LatentModel::decode_x(const Latents& z) const {
  check_latents(z);
  return nn::split_gaussian_head(x_dec_.forward(gather_input(layout_.x_inputs, z)));
}

RowVector LatentModel::expected_y(int arm, const RowVector& m, const Latents& z) const {
  const DistParams p = decode_y(arm, m, z);
  if (p.kind == VarKind::Continuous) return p.mean.row(0);
  return p.logits.row(0).unaryExpr([](double l) { return nn::logistic(l); });
}

double LatentModel::elbo(const Batch& batch, const std::vector<Matrix>& eps) const {
  return const_cast<LatentModel*>(this)->evaluate(batch, eps, false).elbo;
}

LossTerms LatentModel::loss(const Batch& batch, const std::vector<Matrix>& eps) const {
  return const_cast<LatentModel*>(this)->evaluate(batch, eps, false);
}

LossTerms LatentModel::loss_and_grad(const Batch& batch, const std::vector<Matrix>& eps) {
  zero_grad();
  return evaluate(batch, eps, true);
}

// evaluate() mutates parameter gradients only when with_grad is set, which keeps
// the const entry points above free of observable side effects.
LossTerms LatentModel::evaluate(const Batch& batch, const std::vector<Matrix>& eps, bool with_grad) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  require(n >= 1, ErrorKind::Argument, "batch must contain at least one record");
  require(batch.x.rows() == config_.x_dim && batch.x.cols() == n, ErrorKind::Shape, "batch proxies have wrong shape");
  require(batch.m.size() == n && batch.y.size() == n, ErrorKind::Shape, "batch columns have different lengths");
  require(eps.size() == layout_.blocks.size(), ErrorKind::Shape, "one noise matrix per latent block required");
  for (std::size_t b = 0; b < eps.size(); ++b)
    require(eps[b].rows() == layout_.blocks[b].dim && eps[b].cols() == n, ErrorKind::Shape,
            "noise matrix for block " + layout_.blocks[b].name + " has wrong shape");

  const double scale = 1.0 / static_cast<double>(n);
  const double aux_scale = scale * config_.aux_weight;
  const std::size_t nb = layout_.blocks.size();
  LossTerms terms;
  terms.kl.assign(nb, 0.0);

  // Inference networks and reparameterised samples.
  std::vector<nn::Mlp::Tape> enc_tapes(nb);
  std::vector<nn::GaussianHead> heads(nb);
  std::vector<Matrix> sigmas(nb);
  Latents z(nb);
  std::vector<Matrix> dz(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    heads[b] = nn::split_gaussian_head(encoders_[b].forward(batch.x, enc_tapes[b]));
    sigmas[b] = heads[b].sigma();
    z[b] = heads[b].mean + sigmas[b].cwiseProduct(eps[b]);
    const auto& lv = heads[b].logvar.array();
    terms.kl[b] = 0.5 * (heads[b].mean.array().square() + lv.exp() - 1.0 - lv).sum() * scale;
    dz[b] = Matrix::Zero(layout_.blocks[b].dim, n);
  }

  auto scatter = [&](const std::vector<int>& blocks, const Matrix& grad_in, Eigen::Index row0,
                     const std::vector<int>* cols) {
    Eigen::Index row = row0;
    for (int b : blocks) {
      const Eigen::Index d = layout_.blocks[b].dim;
      if (cols) dz[b](Eigen::all, *cols) += grad_in.middleRows(row, d);
      else dz[b] += grad_in.middleRows(row, d);
      row += d;
    }
  };

  // Proxy reconstruction.
  {
    nn::Mlp::Tape tape;
    const Matrix raw = x_dec_.forward(gather_input(layout_.x_inputs, z), tape);
    const nn::GaussianHead h = nn::split_gaussian_head(raw);
    const Eigen::ArrayXXd var = h.logvar.array().exp();
    const Eigen::ArrayXXd r = batch.x.array() - h.mean.array();
    const Eigen::ArrayXXd r2 = r.square();
    terms.recon_nll = (kHalfLog2Pi + 0.5 * h.logvar.array() + r2 / (2.0 * var)).sum() * scale;
    if (with_grad) {
      const Matrix d_mean = (-scale * r / var).matrix();
      const Matrix d_lv = (scale * (0.5 - r2 / (2.0 * var))).matrix();
      scatter(layout_.x_inputs, x_dec_.backward(tape, nn::join_gaussian_grad(h, d_mean, d_lv)), 0, nullptr);
    }
  }

  // Treatment predictor.
  {
    nn::Mlp::Tape tape;
    const Matrix logit = t_dec_.forward(gather_input(layout_.t_inputs, z), tape);
    RowVector target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = batch.t[i];
    Matrix grad;
    terms.nll_t = nll_and_grad(VarKind::Binary, logit, target, aux_scale, with_grad ? &grad : nullptr) * scale;
    if (with_grad) scatter(layout_.t_inputs, t_dec_.backward(tape, grad), 0, nullptr);
  }

  // Mediator and outcome predictors, one network per treatment arm.
  const Matrix m_in = gather_input(layout_.m_inputs, z);
  const int mfeat = mediator_feature_dim();
  Matrix y_in(mfeat + width(layout_, layout_.y_inputs), n);
  y_in << mediator_features(batch.m), gather_input(layout_.y_inputs, z);
  for (int arm = 0; arm < 2; ++arm) {
    const auto idx = arm_indices(batch.t, arm);
    if (idx.empty()) continue;
    {
      nn::Mlp::Tape tape;
      const Matrix raw = m_dec_[arm].forward(m_in(Eigen::all, idx), tape);
      const RowVector target = batch.m(idx);
      Matrix grad;
      terms.nll_m += nll_and_grad(config_.m_kind, raw, target, aux_scale, with_grad ? &grad : nullptr) * scale;
      if (with_grad) scatter(layout_.m_inputs, m_dec_[arm].backward(tape, grad), 0, &idx);
    }
    {
      nn::Mlp::Tape tape;
      const Matrix raw = y_dec_[arm].forward(y_in(Eigen::all, idx), tape);
      const RowVector target = batch.y(idx);
      Matrix grad;
      terms.nll_y += nll_and_grad(config_.y_kind, raw, target, aux_scale, with_grad ? &grad : nullptr) * scale;
      if (with_grad) scatter(layout_.y_inputs, y_dec_[arm].backward(tape, grad), mfeat, &idx);
    }
  }

  double kl_total = 0.0;
  for (double k : terms.kl) kl_total += k;
  terms.elbo = -terms.recon_nll - kl_total;
  terms.loss = -terms.elbo + config_.aux_weight * (terms.nll_t + terms.nll_m + terms.nll_y);
  if (!std::isfinite(terms.loss)) fail(ErrorKind::Training, "non-finite loss");

  if (with_grad) {
    for (std::size_t b = 0; b < nb; ++b) {
      const Matrix& mean = heads[b].mean;
      const Matrix d_mean = dz[b] + scale * mean;
      const Matrix d_lv = (0.5 * dz[b].array() * eps[b].array() * sigmas[b].array() +
                           0.5 * scale * (heads[b].logvar.array().exp() - 1.0))
                              .matrix();
      encoders_[b].backward(enc_tapes[b], nn::join_gaussian_grad(heads[b], d_mean, d_lv));
    }
  }
  return terms;
}

LatentModel make_dmavae(const ModelConfig& config) {
  ModelConfig c = config;
  c.architecture = Architecture::Dmavae;
  return LatentModel(c, dmavae_layout(c.dim_tm, c.dim_my, c.dim_ty));
}

LatentModel make_cmavae(const ModelConfig& config) {
  ModelConfig c = config;
  c.architecture = Architecture::Cmavae;
  return LatentModel(c, cmavae_layout(c.dim_z));
}

LatentModel make_model(const ModelConfig& config) {
  return config.architecture == Architecture::Dmavae ? make_dmavae(config) : make_cmavae(config);
}

std::vector<Matrix> draw_noise(const Layout& layout, std::size_t batch, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<Matrix> eps;
  for (const auto& b : layout.blocks) {
    Matrix e(b.dim, static_cast<Eigen::Index>(batch));
    for (Eigen::Index j = 0; j < e.cols(); ++j)
      for (Eigen::Index i = 0; i < e.rows(); ++i) e(i, j) = normal(rng);
    eps.push_back(std::move(e));
  }
  return eps;
}

}  // namespace dmavae::model
