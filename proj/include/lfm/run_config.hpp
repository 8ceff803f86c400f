#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lfm/codecs.hpp"
#include "lfm/datasets.hpp"
#include "lfm/metrics.hpp"
#include "lfm/sampler.hpp"
#include "lfm/trainer.hpp"
#include "lfm/velocity.hpp"

namespace lfm {

inline constexpr int kSchemaVersion = 1;

// Every accepted key with its default value.
nlohmann::json default_config();

// Checks `user` against the schema (unknown keys, types, required sections)
// and returns it merged over the defaults. Errors name the JSON path.
nlohmann::json resolve_config(const nlohmann::json& user);

// Applies "a.b.c=value"; the value is parsed as JSON and falls back to a
// plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

nlohmann::json read_json_file(const std::filesystem::path& path);
nlohmann::json load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

// output_dir from the config, else LFM_OUTPUT_DIR.
std::filesystem::path output_dir_of(const nlohmann::json& resolved);

// Named stream seed derived from the top-level seed.
std::uint64_t stream_seed(std::uint64_t seed, const std::string& name);

struct DataSplit {
  Dataset train;
  Dataset holdout;
};
DataSplit build_data(const nlohmann::json& resolved);
// The Gaussian data spec; throws ConfigError for other dataset kinds.
GaussianEndpointSpec gaussian_spec_of(const nlohmann::json& resolved);

// Untrained codec as configured (identity and fixed-scale linear codecs
// are complete as built).
Codec build_codec(const nlohmann::json& resolved, std::size_t data_dim);
bool codec_needs_training(const nlohmann::json& resolved);
CodecTrainConfig codec_train_config(const nlohmann::json& resolved);

VelocityConfig velocity_config(const nlohmann::json& resolved, const Dataset& data, std::size_t latent_dim);
TrainConfig train_config(const nlohmann::json& resolved);
ClassifierConfig classifier_config(const nlohmann::json& resolved, std::size_t latent_dim, std::size_t classes);
ClassifierTrainConfig classifier_train_config(const nlohmann::json& resolved);
SolverSpec solver_spec(const nlohmann::json& resolved);
PathSpec path_spec(const nlohmann::json& resolved);

}  // namespace lfm
