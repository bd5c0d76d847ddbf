#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmavae/kinds.hpp"
#include "dmavae/nn.hpp"

namespace dmavae::model {

using nn::Matrix;
using nn::RowVector;

enum class Architecture { Dmavae, Cmavae };

std::string_view to_string(Architecture arch) noexcept;
Architecture parse_architecture(std::string_view text);

struct ModelConfig {
  Architecture architecture = Architecture::Dmavae;
  int x_dim = 6;
  VarKind m_kind = VarKind::Continuous;
  int m_classes = 0;  // categorical mediators only
  VarKind y_kind = VarKind::Continuous;
  int dim_tm = 2;
  int dim_my = 2;
  int dim_ty = 2;
  int dim_z = 2;      // single block of the CMAVAE variant
  std::vector<int> hidden{64, 64};
  nn::Activation activation = nn::Activation::Elu;
  double aux_weight = 1.0;  // multiplies the three predictor NLLs in the loss
  std::uint64_t seed = 0;
};

void validate(const ModelConfig& config);

// Which latent blocks exist and which of them each decoder reads. Decoder
// inputs are the listed blocks concatenated in order (the outcome decoder
// additionally takes the mediator features first).
struct Layout {
  struct Block {
    std::string name;
    int dim = 1;
  };
  std::vector<Block> blocks;
  std::vector<int> t_inputs;
  std::vector<int> m_inputs;
  std::vector<int> y_inputs;
  std::vector<int> x_inputs;

  int block_index(const std::string& name) const;  // -1 when absent
};

// Blocks [Z_TM, Z_MY, Z_TY]; T <- (TM, TY), M <- (TM, MY), Y <- (TY, MY),
// X <- (TM, TY, MY).
Layout dmavae_layout(int dim_tm, int dim_my, int dim_ty);
// One block Z read by every decoder.
Layout cmavae_layout(int dim_z);

// One latent sample per block, each dim x B.
using Latents = std::vector<Matrix>;

struct Posterior {
  Matrix mean;
  Matrix logvar;
  Matrix sigma() const { return (0.5 * logvar.array()).exp().matrix(); }
};

struct Batch {
  Matrix x;                // x_dim x B
  std::vector<int> t;
  RowVector m;             // class index for categorical mediators
  RowVector y;
  std::size_t size() const { return t.size(); }
};

// Distribution parameters emitted by the mediator or outcome decoder.
struct DistParams {
  VarKind kind = VarKind::Continuous;
  Matrix mean;    // continuous: 1 x B
  Matrix sigma;   // continuous: 1 x B
  Matrix logits;  // binary: 1 x B; categorical: K x B
};

struct LossTerms {
  double loss = 0.0;
  double elbo = 0.0;
  double recon_nll = 0.0;
  std::vector<double> kl;  // per block
  double nll_t = 0.0;
  double nll_m = 0.0;
  double nll_y = 0.0;
};

class LatentModel {
 public:
  LatentModel(ModelConfig config, Layout layout);

  const ModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  std::size_t block_count() const { return layout_.blocks.size(); }

  void zero_parameters();
  void reinitialize(std::uint64_t seed);

  nn::Mlp& encoder(std::size_t block) { return encoders_.at(block); }
  nn::Mlp& t_decoder() { return t_dec_; }
  nn::Mlp& m_decoder(int arm) { return m_dec_.at(arm); }
  nn::Mlp& y_decoder(int arm) { return y_dec_.at(arm); }
  nn::Mlp& x_decoder() { return x_dec_; }
  const nn::Mlp& encoder(std::size_t block) const { return encoders_.at(block); }
  const nn::Mlp& t_decoder() const { return t_dec_; }
  const nn::Mlp& m_decoder(int arm) const { return m_dec_.at(arm); }
  const nn::Mlp& y_decoder(int arm) const { return y_dec_.at(arm); }
  const nn::Mlp& x_decoder() const { return x_dec_; }

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  void zero_grad();

  // Diagonal-Gaussian posterior of every block given proxies (x_dim x B).
  std::vector<Posterior> encode(const Matrix& x) const;
  // z = mean + sigma * eps for every block.
  Latents sample(const std::vector<Posterior>& posteriors, const std::vector<Matrix>& eps) const;

  RowVector decode_t(const Latents& z) const;  // P(T = 1)
  DistParams decode_m(int arm, const Latents& z) const;
  DistParams decode_m(const std::vector<int>& t, const Latents& z) const;
  DistParams decode_y(int arm, const RowVector& m, const Latents& z) const;
  DistParams decode_y(const std::vector<int>& t, const RowVector& m, const Latents& z) const;
  nn::GaussianHead decode_x(const Latents& z) const;

  // E[Y | T = arm, M = m, z]: the decoder mean or success probability.
  RowVector expected_y(int arm, const RowVector& m, const Latents& z) const;

  // Mean over the batch of log p(x | z) - sum of KL terms.
  double elbo(const Batch& batch, const std::vector<Matrix>& eps) const;
  // -ELBO + w (NLL(T) + NLL(M) + NLL(Y)) with w = aux_weight, averaged over the batch.
  LossTerms loss(const Batch& batch, const std::vector<Matrix>& eps) const;
  // Same value as loss(); also overwrites every parameter gradient.
  LossTerms loss_and_grad(const Batch& batch, const std::vector<Matrix>& eps);

  // Rows fed to the outcome decoder for mediator values m (1 x B).
  Matrix mediator_features(const RowVector& m) const;
  int mediator_feature_dim() const;

 private:
  LossTerms evaluate(const Batch& batch, const std::vector<Matrix>& eps, bool with_grad);
  Matrix gather_input(const std::vector<int>& blocks, const Latents& z) const;
  void check_latents(const Latents& z) const;

  ModelConfig config_;
  Layout layout_;
  std::vector<nn::Mlp> encoders_;
  nn::Mlp t_dec_;
  std::vector<nn::Mlp> m_dec_;  // per treatment arm
  std::vector<nn::Mlp> y_dec_;  // per treatment arm
  nn::Mlp x_dec_;
};

LatentModel make_dmavae(const ModelConfig& config);
LatentModel make_cmavae(const ModelConfig& config);
// Dispatches on config.architecture.
LatentModel make_model(const ModelConfig& config);

// Draws one standard-normal noise matrix per block (dim x batch).
std::vector<Matrix> draw_noise(const Layout& layout, std::size_t batch, Rng& rng);

}  // namespace dmavae::model
