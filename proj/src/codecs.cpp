#include "lfm/codecs.hpp"

#include <algorithm>
#include <cmath>

#include "lfm/errors.hpp"
#include "lfm/linalg.hpp"
#include "lfm/optim.hpp"

namespace lfm {

std::string to_string(CodecKind kind) {
  switch (kind) {
    case CodecKind::Identity: return "identity";
    case CodecKind::Linear: return "linear";
    case CodecKind::GaussianVAE: return "gaussian_vae";
  }
  return "identity";
}

CodecKind codec_kind_from_string(const std::string& s) {
  if (s == "identity") return CodecKind::Identity;
  if (s == "linear") return CodecKind::Linear;
  if (s == "gaussian_vae") return CodecKind::GaussianVAE;
  throw ConfigError("unknown codec variant '" + s + "' (expected identity, linear or gaussian_vae)");
}

nlohmann::json CodecReport::to_json() const {
  return {{"lipschitz_decoder", lipschitz_decoder},
          {"recon_offset_mean", recon_offset_mean},
          {"recon_offset_max", recon_offset_max},
          {"kl_to_prior", kl_to_prior}};
}

Codec Codec::identity(std::size_t dim) {
  if (dim == 0) throw ContractError("identity codec: dimension must be positive");
  Codec c;
  c.kind_ = CodecKind::Identity;
  c.data_dim_ = c.latent_dim_ = dim;
  return c;
}

Codec Codec::linear(std::size_t data_dim, std::size_t latent_dim, Rng& rng) {
  if (data_dim == 0 || latent_dim == 0) throw ContractError("linear codec: dimensions must be positive");
  Codec c;
  c.kind_ = CodecKind::Linear;
  c.data_dim_ = data_dim;
  c.latent_dim_ = latent_dim;
  Rng enc = rng.split("encoder"), dec = rng.split("decoder");
  c.enc_lin_ = Linear("encoder", data_dim, latent_dim, enc);
  c.dec_lin_ = Linear("decoder", latent_dim, data_dim, dec);
  return c;
}

Codec Codec::linear_fixed(Tensor encoder_weight, Tensor encoder_bias, Tensor decoder_weight, Tensor decoder_bias) {
  const std::size_t d = encoder_weight.rows(), k = encoder_weight.cols();
  if (encoder_bias.shape() != Shape{1, k} || decoder_weight.shape() != Shape{k, d} ||
      decoder_bias.shape() != Shape{1, d}) {
    throw DimensionError("linear_fixed: inconsistent encoder/decoder shapes");
  }
  Codec c;
  c.kind_ = CodecKind::Linear;
  c.data_dim_ = d;
  c.latent_dim_ = k;
  c.enc_lin_.weight = Parameter("encoder.weight", std::move(encoder_weight));
  c.enc_lin_.bias = Parameter("encoder.bias", std::move(encoder_bias));
  c.dec_lin_.weight = Parameter("decoder.weight", std::move(decoder_weight));
  c.dec_lin_.bias = Parameter("decoder.bias", std::move(decoder_bias));
  return c;
}

Codec Codec::gaussian_vae(std::size_t data_dim, std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                          double kl_weight, Rng& rng, Activation act) {
  if (data_dim == 0 || latent_dim == 0) throw ContractError("gaussian_vae: dimensions must be positive");
  if (kl_weight < 0.0) throw ContractError("gaussian_vae: kl_weight must be non-negative");
  Codec c;
  c.kind_ = CodecKind::GaussianVAE;
  c.data_dim_ = data_dim;
  c.latent_dim_ = latent_dim;
  c.kl_weight_ = kl_weight;
  c.hidden_ = hidden;
  c.act_ = act;
  std::vector<std::size_t> enc_widths{data_dim};
  enc_widths.insert(enc_widths.end(), hidden.begin(), hidden.end());
  enc_widths.push_back(2 * latent_dim);
  std::vector<std::size_t> dec_widths{latent_dim};
  dec_widths.insert(dec_widths.end(), hidden.begin(), hidden.end());
  dec_widths.push_back(data_dim);
  Rng enc = rng.split("encoder"), dec = rng.split("decoder");
  c.enc_mlp_ = Mlp("encoder", enc_widths, act, enc);
  c.dec_mlp_ = Mlp("decoder", dec_widths, act, dec);
  return c;
}

void Codec::check_data(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != data_dim_) {
    throw DimensionError("codec: expected data of width " + std::to_string(data_dim_) + ", got " +
                         shape_to_string(x.shape()));
  }
}

void Codec::check_latent(const Tensor& z) const {
  if (z.rank() != 2 || z.cols() != latent_dim_) {
    throw DimensionError("codec: expected latent of width " + std::to_string(latent_dim_) + ", got " +
                         shape_to_string(z.shape()));
  }
}

Codec::Posterior Codec::posterior(const Tensor& x) const {
  check_data(x);
  switch (kind_) {
    case CodecKind::Identity: return {x, Tensor()};
    case CodecKind::Linear: {
      Graph g;
      return {enc_lin_(g, g.constant(x)).value(), Tensor()};
    }
    case CodecKind::GaussianVAE: {
      const Tensor h = enc_mlp_.eval(x);
      Posterior p{h.col_slice(0, latent_dim_), h.col_slice(latent_dim_, 2 * latent_dim_)};
      for (double& v : p.sigma.storage()) v = softplus(v) + kSigmaFloor;
      return p;
    }
  }
  return {};
}

Tensor Codec::encode(const Tensor& x, Rng& rng) const {
  Posterior p = posterior(x);
  if (kind_ != CodecKind::GaussianVAE) return p.mu;
  return reparameterize(p.mu, p.sigma, rng);
}

Tensor Codec::encode_mean(const Tensor& x) const { return posterior(x).mu; }

Tensor Codec::decode(const Tensor& z) const {
  check_latent(z);
  switch (kind_) {
    case CodecKind::Identity: return z;
    case CodecKind::Linear: {
      Graph g;
      return dec_lin_(g, g.constant(z)).value();
    }
    case CodecKind::GaussianVAE: return dec_mlp_.eval(z);
  }
  return z;
}

Var Codec::decode(Graph& g, Var z) {
  switch (kind_) {
    case CodecKind::Identity: return z;
    case CodecKind::Linear: return dec_lin_(g, z, true);
    case CodecKind::GaussianVAE: return dec_mlp_.forward(g, z);
  }
  return z;
}

Var Codec::encode_linear(Graph& g, Var x) {
  if (kind_ != CodecKind::Linear) throw ContractError("encode_linear on a non-linear codec");
  return enc_lin_(g, x, true);
}

std::pair<Var, Var> Codec::posterior(Graph& g, Var x) {
  if (kind_ != CodecKind::GaussianVAE) throw ContractError("posterior graph requires a Gaussian VAE codec");
  Var h = enc_mlp_.forward(g, x);
  Var mu = ad::slice_cols(h, 0, latent_dim_);
  Var sigma = ad::add_scalar(ad::softplus(ad::slice_cols(h, latent_dim_, 2 * latent_dim_)), kSigmaFloor);
  return {mu, sigma};
}

std::vector<Parameter*> Codec::parameters() {
  switch (kind_) {
    case CodecKind::Identity: return {};
    case CodecKind::Linear: return {&enc_lin_.weight, &enc_lin_.bias, &dec_lin_.weight, &dec_lin_.bias};
    case CodecKind::GaussianVAE: {
      auto p = enc_mlp_.parameters();
      auto d = dec_mlp_.parameters();
      p.insert(p.end(), d.begin(), d.end());
      return p;
    }
  }
  return {};
}

Checkpoint Codec::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "codec"},
               {"variant", to_string(kind_)},
               {"data_dim", data_dim_},
               {"latent_dim", latent_dim_},
               {"kl_weight", kl_weight_},
               {"hidden", hidden_},
               {"activation", to_string(act_)}};
  auto params = const_cast<Codec*>(this)->parameters();
  store_parameters(ckpt, params);
  return ckpt;
}

Codec Codec::from_checkpoint(const Checkpoint& ckpt) {
  const auto& m = ckpt.meta;
  if (m.value("kind", "") != "codec") throw ConfigError("checkpoint does not hold a codec");
  const CodecKind kind = codec_kind_from_string(m.at("variant").get<std::string>());
  const auto d = m.at("data_dim").get<std::size_t>();
  const auto k = m.at("latent_dim").get<std::size_t>();
  Rng rng(0);
  Codec c;
  switch (kind) {
    case CodecKind::Identity: c = identity(d); break;
    case CodecKind::Linear: c = linear(d, k, rng); break;
    case CodecKind::GaussianVAE:
      c = gaussian_vae(d, k, m.at("hidden").get<std::vector<std::size_t>>(), m.at("kl_weight").get<double>(), rng,
                       activation_from_string(m.at("activation").get<std::string>()));
      break;
  }
  restore_parameters(ckpt, c.parameters());
  return c;
}

Tensor reparameterize(const Tensor& mu, const Tensor& sigma, Rng& rng) {
  if (mu.shape() != sigma.shape()) {
    throw DimensionError("reparameterize: mu " + shape_to_string(mu.shape()) + " vs sigma " +
                         shape_to_string(sigma.shape()));
  }
  Tensor z(mu.shape());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw DomainError("reparameterize: sigma must be positive");
    z[i] = mu[i] + rng.normal() * sigma[i];
  }
  return z;
}

double gaussian_kl(const Tensor& mu, const Tensor& sigma) {
  if (mu.shape() != sigma.shape()) throw DimensionError("gaussian_kl: shape mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    kl += 0.5 * (mu[i] * mu[i] + sigma[i] * sigma[i] - 1.0 - 2.0 * std::log(sigma[i]));
  }
  return kl;
}

CodecReport train_codec(Codec& codec, const Tensor& data, const CodecTrainConfig& config, Rng rng) {
  if (codec.kind() == CodecKind::Identity) throw ContractError("train_codec: the identity codec has nothing to train");
  if (data.cols() != codec.data_dim()) throw DimensionError("train_codec: data width does not match codec");
  if (config.batch_size == 0) throw ContractError("train_codec: batch_size must be positive");

  auto params = codec.parameters();
  AdamW opt(AdamConfig{.lr = config.lr});
  Rng shuffle_rng = rng.split("shuffle");
  Rng noise_rng = rng.split("noise");
  const std::size_t n = data.rows();
  const std::size_t batch = std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  Checkpoint last_good = codec.to_checkpoint();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    for (std::size_t start = 0; start + batch <= n; start += batch) {
      Tensor xb({batch, data.cols()});
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t j = 0; j < data.cols(); ++j) xb.at(r, j) = data.at(order[start + r], j);
      }
      Graph g;
      Var x = g.constant(xb);
      Var loss;
      if (codec.kind() == CodecKind::Linear) {
        Var rec = codec.decode(g, codec.encode_linear(g, x));
        Var diff = ad::sub(rec, x);
        loss = ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(batch));
      } else {
        auto [mu, sigma] = codec.posterior(g, x);
        Var eta = g.constant(noise_rng.normal_tensor(batch, codec.latent_dim()));
        Var z = ad::add(mu, ad::mul(eta, sigma));
        Var diff = ad::sub(codec.decode(g, z), x);
        Var recon = ad::sum(ad::mul(diff, diff));
        // KL = 1/2 sum(mu^2 + sigma^2 - 1 - 2 log sigma)
        Var kl_terms = ad::sub(ad::add(ad::mul(mu, mu), ad::mul(sigma, sigma)),
                               ad::add_scalar(ad::scale(ad::log(sigma), 2.0), 1.0));
        Var kl = ad::scale(ad::sum(kl_terms), 0.5);
        loss = ad::scale(ad::add(recon, ad::scale(kl, codec.kl_weight())), 1.0 / static_cast<double>(batch));
      }
      if (!std::isfinite(loss.value().item())) {
        codec = Codec::from_checkpoint(last_good);
        throw TrainingDivergence("train_codec: non-finite loss at epoch " + std::to_string(epoch), last_good);
      }
      zero_grads(params);
      g.backward(loss);
      opt.step(params);
    }
    last_good = codec.to_checkpoint();
  }
  return measure_constants(codec, data);
}

CodecReport measure_constants(const Codec& codec, const Tensor& data) {
  CodecReport r;
  switch (codec.kind()) {
    case CodecKind::Identity: r.lipschitz_decoder = 1.0; break;
    case CodecKind::Linear: r.lipschitz_decoder = spectral_norm(codec.decoder_linear().weight.value); break;
    case CodecKind::GaussianVAE:
      r.lipschitz_decoder = codec.decoder_mlp().lipschitz_bound(0, codec.latent_dim());
      break;
  }
  if (codec.kind() == CodecKind::Identity) return r;

  const Codec::Posterior post = codec.posterior(data);
  const Tensor offsets = row_squared_norms(codec.decode(post.mu) - data);
  double total = 0.0, worst = 0.0;
  for (double v : offsets.data()) {
    total += v;
    worst = std::max(worst, v);
  }
  r.recon_offset_mean = total / static_cast<double>(data.rows());
  r.recon_offset_max = worst;
  if (codec.kind() == CodecKind::GaussianVAE) {
    r.kl_to_prior = gaussian_kl(post.mu, post.sigma) / static_cast<double>(data.rows());
  }
  return r;
}

}  // namespace lfm
