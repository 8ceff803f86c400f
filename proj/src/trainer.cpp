#include "lfm/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "lfm/checkpoint.hpp"
#include "lfm/errors.hpp"

namespace lfm {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  return idx;
}

Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  const std::size_t d = src.cols();
  Tensor out({end - begin, d});
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(i - begin, j) = src.at(idx[i], j);
  }
  return out;
}

class StepLog {
 public:
  StepLog(const std::filesystem::path& path, bool timing) : timing_(timing) {
    if (path.empty()) return;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw ConfigError("cannot open training log " + path.string());
  }
  void write(std::size_t step, double loss, double wall_ms) {
    if (!out_.is_open()) return;
    nlohmann::json rec{{"step", step}, {"loss", loss}, {"wall_ms", timing_ ? wall_ms : 0.0}};
    out_ << rec.dump() << '\n';
  }

 private:
  std::ofstream out_;
  bool timing_;
};

TrainRecord train_loop(const Codec& codec, VelocityModel& model, const Dataset& data, const TrainConfig& config,
                       bool conditional) {
  config.validate();
  if (data.size() == 0) throw ConfigError("training data is empty");
  if (data.dim() != codec.data_dim()) throw DimensionError("dataset width does not match the codec");
  if (codec.latent_dim() != model.config().latent_dim) throw DimensionError("codec latent width != model latent width");

  const auto start = Clock::now();
  Rng root(config.seed);
  const Rng order_rng = root.split("order");
  Rng noise_rng = root.split("noise");
  Rng time_rng = root.split("time");
  Rng encode_rng = root.split("encode");
  Rng dropout_rng = root.split("dropout");

  AdamW opt(config.adam());
  auto params = model.parameters();
  StepLog log(config.log_path, config.record_timing);
  TrainRecord record;
  Checkpoint last_good = model.to_checkpoint();

  auto save = [&](const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path());
    save_checkpoint(path, model.to_checkpoint());
  };

  std::size_t step = 0;
  const std::size_t n = data.size();
  const std::size_t total_steps = config.epochs * ((n + config.batch_size - 1) / config.batch_size);
  const std::size_t d = model.config().latent_dim;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    const auto order = shuffled(n, order_rng.split(epoch));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += config.batch_size) {
      const std::size_t e = std::min(n, b + config.batch_size);
      const std::size_t bs = e - b;
      Tensor x0 = gather_rows(data.samples, order, b, e);
      Tensor z0 = codec.encode(x0, encode_rng);
      Tensor z1 = noise_rng.normal_tensor(bs, d);
      Tensor t({bs, 1});
      for (std::size_t i = 0; i < bs; ++i) t[i] = time_rng.uniform();

      std::vector<Condition> conds(1);
      if (conditional) {
        conds.assign(bs, Condition::none());
        for (std::size_t i = 0; i < bs; ++i) {
          ++record.conditional_samples;
          if (dropout_rng.bernoulli(config.p_u)) {
            ++record.dropout_events;
          } else {
            conds[i] = dataset_condition(model, codec, data, order[b + i]);
          }
        }
      }

      zero_grads(params);
      Graph g;
      Var loss = fm_loss(g, model, z0, z1, t, conds, config.path);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        restore_parameters(last_good, params);
        throw TrainingDivergence("non-finite loss at step " + std::to_string(step), last_good);
      }
      g.backward(loss);
      opt.set_lr(config.lr_at(step, total_steps));
      try {
        opt.step(params);
      } catch (const NumericError& err) {
        restore_parameters(last_good, params);
        throw TrainingDivergence(err.what(), last_good);
      }
      record.losses.push_back(value);
      loss_sum += value;
      ++batches;
      ++step;
      log.write(step, value, elapsed_ms(start));
      if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
        last_good = model.to_checkpoint();
        if (!config.checkpoint_dir.empty()) {
          save(config.checkpoint_dir / ("model_step" + std::to_string(step) + ".ckpt"));
        }
      }
    }
    last_good = model.to_checkpoint();
    record.epochs.push_back({epoch, loss_sum / static_cast<double>(batches),
                             config.record_timing ? elapsed_ms(epoch_start) : 0.0});
  }
  if (!config.checkpoint_dir.empty()) {
    record.final_checkpoint = config.checkpoint_dir / "model.ckpt";
    save(record.final_checkpoint);
  }
  record.wall_ms = config.record_timing ? elapsed_ms(start) : 0.0;
  return record;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(p_u >= 0.0 && p_u <= 1.0)) throw ConfigError("train.p_u must lie in [0, 1]");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.betas must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (lr_schedule != "constant" && lr_schedule != "cosine") {
    throw ConfigError("train.lr_schedule must be \"constant\" or \"cosine\"");
  }
  if (!(lr_min >= 0.0 && lr_min <= lr)) throw ConfigError("train.lr_min must lie in [0, lr]");
  path.validate();
}

AdamConfig TrainConfig::adam() const {
  AdamConfig a;
  a.lr = lr;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.weight_decay = weight_decay;
  return a;
}

double TrainConfig::lr_at(std::size_t step, std::size_t total_steps) const {
  if (lr_schedule == "constant" || total_steps <= 1) return lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"betas", {beta1, beta2}},
          {"lr_schedule", lr_schedule},
          {"lr_min", lr_min},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"p_u", p_u},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every}};
}

nlohmann::json TrainRecord::summary() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"wall_ms", e.wall_ms}});
  }
  const auto [ema_start, ema_end] = loss_ema(losses);
  return {{"steps", losses.size()},
          {"final_loss", losses.empty() ? 0.0 : losses.back()},
          {"loss_ema_start", ema_start},
          {"loss_ema_end", ema_end},
          {"epochs", epochs_json},
          {"wall_ms", wall_ms},
          {"final_checkpoint", final_checkpoint.filename().string()},
          {"conditional_samples", conditional_samples},
          {"dropout_events", dropout_events}};
}

Condition dataset_condition(const VelocityModel& model, const Codec& codec, const Dataset& data, std::size_t i) {
  const VelocityConfig& cfg = model.config();
  if (cfg.uses_labels()) {
    if (!data.has_labels()) throw ConfigError("label-conditioned model needs a labeled dataset");
    return Condition::with_label(data.labels[i]);
  }
  if (cfg.uses_mask()) {
    if (!data.has_masks()) throw ConfigError("mask-conditioned model needs a masked dataset");
    Tensor zm = codec.encode_mean(data.masked_samples.row_slice(i, i + 1));
    return Condition::masked(std::move(zm), resize_mask(data.masks.row_slice(i, i + 1), cfg.latent_dim));
  }
  if (cfg.uses_semantic()) {
    if (!data.has_semantic_maps()) throw ConfigError("semantic model needs a dataset with semantic maps");
    return Condition::semantic(data.semantic_maps.row_slice(i, i + 1));
  }
  throw ConfigError("train_conditional needs a conditional model");
}

std::pair<double, double> loss_ema(const std::vector<double>& losses, double decay) {
  if (losses.empty()) return {0.0, 0.0};
  // The starting value averages the first window so that a single lucky
  // batch does not dominate.
  const std::size_t window = std::min<std::size_t>(losses.size(), 20);
  double first = 0.0;
  for (std::size_t i = 0; i < window; ++i) first += losses[i];
  first /= static_cast<double>(window);
  double ema = first;
  for (double l : losses) ema = decay * ema + (1.0 - decay) * l;
  return {first, ema};
}

std::pair<Tensor, Tensor> path_batch(const PathSpec& path, const Tensor& z0, const Tensor& z1, const Tensor& t) {
  if (z0.shape() != z1.shape()) {
    throw DimensionError("z0 " + shape_to_string(z0.shape()) + " vs z1 " + shape_to_string(z1.shape()));
  }
  const std::size_t b = z0.rows(), d = z0.cols();
  if (t.size() != b) throw DimensionError("path_batch: need one time per row");
  Tensor zt({b, d}), target({b, d});
  for (std::size_t i = 0; i < b; ++i) {
    const double ti = t[i];
    if (!(ti >= 0.0 && ti <= 1.0)) throw DomainError("t must lie in [0, 1]");
    if (path.kind == PathKind::ConstantVelocity) {
      for (std::size_t j = 0; j < d; ++j) {
        const double a = z0.at(i, j), n = z1.at(i, j);
        zt.at(i, j) = (1.0 - ti) * a + ti * n;
        target.at(i, j) = n - a;
      }
    } else {
      PathSample s = interpolate(path, z0.row_slice(i, i + 1), z1.row_slice(i, i + 1), ti);
      for (std::size_t j = 0; j < d; ++j) {
        zt.at(i, j) = s.xt[j];
        target.at(i, j) = s.v_target[j];
      }
    }
  }
  return {std::move(zt), std::move(target)};
}

Var fm_loss(Graph& g, VelocityModel& model, const Tensor& z0, const Tensor& z1, const Tensor& t,
            const std::vector<Condition>& conditions, const PathSpec& path) {
  auto [zt, target] = path_batch(path, z0, z1, t);
  Var v = model.forward(g, g.constant(std::move(zt)), conditions, t, true);
  Var diff = ad::sub(g.constant(std::move(target)), v);
  return ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(z0.rows()));
}

double fm_loss(const VelocityModel& model, const Tensor& z0, const Tensor& z1, const Tensor& t,
               const std::vector<Condition>& conditions, const PathSpec& path) {
  auto [zt, target] = path_batch(path, z0, z1, t);
  Graph g;
  Var v = model.forward(g, g.constant(std::move(zt)), conditions, t);
  return squared_norm(target - v.value()) / static_cast<double>(z0.rows());
}

double fm_loss(const BatchField& field, const Tensor& z0, const Tensor& z1, const Tensor& t, const PathSpec& path) {
  auto [zt, target] = path_batch(path, z0, z1, t);
  return squared_norm(target - field(zt, t)) / static_cast<double>(z0.rows());
}

TrainRecord train_unconditional(const Codec& codec, VelocityModel& model, const Dataset& data,
                                const TrainConfig& config) {
  return train_loop(codec, model, data, config, false);
}

TrainRecord train_conditional(const Codec& codec, VelocityModel& model, const Dataset& data,
                              const TrainConfig& config) {
  return train_loop(codec, model, data, config, true);
}

std::vector<double> train_classifier(const Codec& codec, Classifier& clf, const Dataset& data,
                                     const ClassifierTrainConfig& config) {
  if (!data.has_labels()) throw ConfigError("classifier training needs labels");
  if (data.num_classes != clf.config().num_classes) throw ConfigError("classifier class count != dataset classes");
  if (config.batch_size < 1) throw ConfigError("classifier batch_size must be >= 1");
  Rng root(config.seed);
  const Rng order_rng = root.split("order");
  Rng noise_rng = root.split("noise");
  Rng time_rng = root.split("time");
  Rng encode_rng = root.split("encode");
  AdamConfig ac;
  ac.lr = config.lr;
  AdamW opt(ac);
  auto params = clf.parameters();
  std::vector<double> losses;
  const std::size_t n = data.size(), k = clf.config().num_classes;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled(n, order_rng.split(epoch));
    for (std::size_t b = 0; b < n; b += config.batch_size) {
      const std::size_t e = std::min(n, b + config.batch_size), bs = e - b;
      Tensor z0 = codec.encode(gather_rows(data.samples, order, b, e), encode_rng);
      Tensor z1 = noise_rng.normal_tensor(bs, z0.cols());
      Tensor t({bs, 1});
      for (std::size_t i = 0; i < bs; ++i) t[i] = time_rng.uniform();
      Tensor zt = path_batch(config.path, z0, z1, t).first;
      Tensor onehot({bs, k});
      for (std::size_t i = 0; i < bs; ++i) onehot.at(i, data.labels[order[b + i]]) = 1.0;
      zero_grads(params);
      Graph g;
      Var lp = clf.log_probs(g, g.constant(std::move(zt)), t, true);
      Var loss = ad::scale(ad::sum(ad::mul(lp, g.constant(std::move(onehot)))), -1.0 / static_cast<double>(bs));
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError("classifier training diverged");
      g.backward(loss);
      opt.step(params);
      losses.push_back(value);
    }
  }
  return losses;
}

}  // namespace lfm
