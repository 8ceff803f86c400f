#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace lfm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;

struct CommandOptions {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  // sample
  std::optional<std::size_t> n;
  std::optional<std::string> solver;
  std::optional<double> gamma;
  std::optional<std::size_t> steps;
  std::optional<double> rtol;
  std::optional<double> atol;
  std::optional<long> label;
  // eval
  std::filesystem::path samples;
  std::filesystem::path reference;
  std::filesystem::path traces;
};

// Each command returns an exit code: 0 success, 1 configuration error,
// 2 numerical failure (divergence, solver failure, unsatisfied bound).
int cmd_train_codec(const CommandOptions& opts, std::ostream& log);
int cmd_train(const CommandOptions& opts, std::ostream& log);
int cmd_sample(const CommandOptions& opts, std::ostream& log);
int cmd_eval(const CommandOptions& opts, std::ostream& log);
int cmd_bench_solvers(const CommandOptions& opts, std::ostream& log);
int cmd_bound_check(const CommandOptions& opts, std::ostream& log);

int run_command(const std::string& name, const CommandOptions& opts, std::ostream& log);

// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace lfm
