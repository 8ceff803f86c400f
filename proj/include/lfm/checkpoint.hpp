#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lfm/autodiff.hpp"
#include "lfm/tensor.hpp"

namespace lfm {

// On-disk layout: one line of compact JSON (the manifest) terminated by '\n',
// followed by the raw little-endian float64 buffers concatenated in manifest
// order. Manifest offsets are byte offsets from the first byte after the
// newline.
//
//   {"format":"lfm-checkpoint","format_version":1,"dtype":"f64le",
//    "meta":{...},"tensors":[{"name":..,"shape":[..],"offset":..,"count":..}]}
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies named parameter values into a checkpoint / back out of one.
void store_parameters(Checkpoint& ckpt, const std::vector<Parameter*>& params);
void restore_parameters(const Checkpoint& ckpt, const std::vector<Parameter*>& params);

}  // namespace lfm

namespace lfm {

// Training produced a non-finite loss. Carries the parameters from the last
// step whose loss was finite.
class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(const std::string& what, Checkpoint last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

}  // namespace lfm
