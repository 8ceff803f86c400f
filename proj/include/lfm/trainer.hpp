#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfm/codecs.hpp"
#include "lfm/datasets.hpp"
#include "lfm/optim.hpp"
#include "lfm/paths.hpp"
#include "lfm/velocity.hpp"

namespace lfm {

struct TrainConfig {
  double lr = 1e-3;
  // "constant" or "cosine" (decays to lr_min over the step budget).
  std::string lr_schedule = "constant";
  double lr_min = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  double p_u = 0.1;
  PathSpec path;
  std::uint64_t seed = 0;
  // Steps between checkpoints written to checkpoint_dir; 0 disables them.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  // JSON lines {step, loss, wall_ms}; empty disables the log.
  std::filesystem::path log_path;
  // When false every wall-clock field is written as 0.
  bool record_timing = true;

  void validate() const;
  AdamConfig adam() const;
  double lr_at(std::size_t step, std::size_t total_steps) const;
  nlohmann::json to_json() const;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainRecord {
  std::vector<double> losses;
  std::vector<EpochSummary> epochs;
  double wall_ms = 0.0;
  std::filesystem::path final_checkpoint;
  std::size_t conditional_samples = 0;
  std::size_t dropout_events = 0;

  nlohmann::json summary() const;
};

// Condition carried by sample i of the dataset for this model (label,
// encoded masked sample with its resized mask, or semantic map).
Condition dataset_condition(const VelocityModel& model, const Codec& codec, const Dataset& data, std::size_t i);

// Exponential moving average of a loss curve; returns the first and last
// smoothed values.
std::pair<double, double> loss_ema(const std::vector<double>& losses, double decay = 0.98);

// Per-row interpolation (zt, target) for rows of z0, z1 with times t [B x 1].
std::pair<Tensor, Tensor> path_batch(const PathSpec& path, const Tensor& z0, const Tensor& z1, const Tensor& t);

// Mean over the batch of ||target - v(zt, c, t)||^2 as a graph node.
Var fm_loss(Graph& g, VelocityModel& model, const Tensor& z0, const Tensor& z1, const Tensor& t,
            const std::vector<Condition>& conditions, const PathSpec& path = {});
double fm_loss(const VelocityModel& model, const Tensor& z0, const Tensor& z1, const Tensor& t,
               const std::vector<Condition>& conditions, const PathSpec& path = {});

// The same loss for an arbitrary field v(zt, t) with per-row times.
using BatchField = std::function<Tensor(const Tensor& z, const Tensor& t)>;
double fm_loss(const BatchField& field, const Tensor& z0, const Tensor& z1, const Tensor& t,
               const PathSpec& path = {});

// Unconditional loop: every sample uses the null condition.
TrainRecord train_unconditional(const Codec& codec, VelocityModel& model, const Dataset& data,
                                const TrainConfig& config);
// Conditional loop: each sample's condition (label, mask or semantic map,
// depending on the model) is replaced by the null condition with
// probability p_u.
TrainRecord train_conditional(const Codec& codec, VelocityModel& model, const Dataset& data,
                              const TrainConfig& config);

struct ClassifierTrainConfig {
  double lr = 3e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  PathSpec path;
  std::uint64_t seed = 0;
};

// Cross-entropy on noisy path points (xt, t, label), t ~ U[0, 1].
std::vector<double> train_classifier(const Codec& codec, Classifier& clf, const Dataset& data,
                                     const ClassifierTrainConfig& config);

}  // namespace lfm
