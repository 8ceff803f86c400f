#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfm/checkpoint.hpp"
#include "lfm/nn.hpp"
#include "lfm/rng.hpp"

namespace lfm {

enum class CodecKind { Identity, Linear, GaussianVAE };

std::string to_string(CodecKind kind);
CodecKind codec_kind_from_string(const std::string& s);

// Lower bound on the posterior scale inside the softplus parameterisation.
inline constexpr double kSigmaFloor = 1e-6;

struct CodecReport {
  double lipschitz_decoder = 1.0;
  double recon_offset_mean = 0.0;  // mean over data of ||decode(mu(x)) - x||^2
  double recon_offset_max = 0.0;   // max over data of the same
  double kl_to_prior = 0.0;        // mean KL(q(z|x) || N(0, I)); 0 for deterministic codecs

  nlohmann::json to_json() const;
};

struct CodecTrainConfig {
  double lr = 3e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
};

// Encoder/decoder pair defining the latent space. Encoders map [n x data_dim]
// to [n x latent_dim]; decoders are deterministic.
class Codec {
 public:
  static Codec identity(std::size_t dim);
  static Codec linear(std::size_t data_dim, std::size_t latent_dim, Rng& rng);
  // Linear codec with explicit, frozen maps z = x We + be and x = z Wd + bd.
  static Codec linear_fixed(Tensor encoder_weight, Tensor encoder_bias, Tensor decoder_weight,
                            Tensor decoder_bias);
  static Codec gaussian_vae(std::size_t data_dim, std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                            double kl_weight, Rng& rng, Activation act = Activation::SiLU);

  CodecKind kind() const { return kind_; }
  std::size_t data_dim() const { return data_dim_; }
  std::size_t latent_dim() const { return latent_dim_; }
  double kl_weight() const { return kl_weight_; }

  struct Posterior {
    Tensor mu;
    Tensor sigma;
  };
  // Gaussian posterior parameters; sigma is empty for deterministic codecs.
  Posterior posterior(const Tensor& x) const;
  // Stochastic encoding (fresh eta for the VAE); deterministic otherwise.
  Tensor encode(const Tensor& x, Rng& rng) const;
  Tensor encode_mean(const Tensor& x) const;
  Tensor decode(const Tensor& z) const;

  // Differentiable pieces used by train_codec.
  Var decode(Graph& g, Var z);
  Var encode_linear(Graph& g, Var x);
  std::pair<Var, Var> posterior(Graph& g, Var x);

  std::vector<Parameter*> parameters();
  const Linear& encoder_linear() const { return enc_lin_; }
  const Linear& decoder_linear() const { return dec_lin_; }
  const Mlp& encoder_mlp() const { return enc_mlp_; }
  const Mlp& decoder_mlp() const { return dec_mlp_; }

  Checkpoint to_checkpoint() const;
  static Codec from_checkpoint(const Checkpoint& ckpt);

 private:
  void check_data(const Tensor& x) const;
  void check_latent(const Tensor& z) const;

  CodecKind kind_ = CodecKind::Identity;
  std::size_t data_dim_ = 0;
  std::size_t latent_dim_ = 0;
  double kl_weight_ = 0.0;
  std::vector<std::size_t> hidden_;
  Activation act_ = Activation::SiLU;
  Linear enc_lin_;
  Linear dec_lin_;
  Mlp enc_mlp_;
  Mlp dec_mlp_;
};

// mu + eta * sigma with eta ~ N(0, I). Throws DomainError for sigma <= 0.
Tensor reparameterize(const Tensor& mu, const Tensor& sigma, Rng& rng);

// Sum over elements of KL(N(mu, sigma^2) || N(0, 1)) = 1/2 sum(mu^2 + sigma^2 - 1 - 2 log sigma).
double gaussian_kl(const Tensor& mu, const Tensor& sigma);

// Minimises mean ||decode(encode(x)) - x||^2 (+ kl_weight * KL for the VAE)
// with Adam, then measures the codec constants on `data`. Identity codecs
// are rejected with ContractError. A non-finite loss throws
// TrainingDivergence with the last finite parameters.
CodecReport train_codec(Codec& codec, const Tensor& data, const CodecTrainConfig& config, Rng rng);

// Decoder Lipschitz constant (exact spectral norm for Linear, spectral
// product bound for the VAE) and reconstruction offsets under mean encoding.
CodecReport measure_constants(const Codec& codec, const Tensor& data);

}  // namespace lfm
