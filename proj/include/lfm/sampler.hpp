#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lfm/codecs.hpp"
#include "lfm/errors.hpp"
#include "lfm/velocity.hpp"

namespace lfm {

// Velocity field dz/dt = f(z, t) evaluated on all rows of z at a shared t.
using Field = std::function<Tensor(const Tensor& z, double t)>;

enum class SolverKind { Euler, Heun, DormandPrince };
std::string to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& s);

struct SolverSpec {
  SolverKind kind = SolverKind::Euler;
  std::size_t steps = 100;
  double rtol = 1e-5;
  double atol = 1e-5;
  std::size_t max_nfe = 100000;
  bool record_trajectory = false;

  static SolverSpec euler(std::size_t steps);
  static SolverSpec heun(std::size_t steps);
  static SolverSpec dopri5(double rtol, double atol);
  void validate() const;
  nlohmann::json to_json() const;
};

struct GuidanceSpec {
  enum class Mode { None, ClassifierFree, ClassifierGradient };

  Mode mode = Mode::None;
  double gamma = 1.0;
  const Classifier* classifier = nullptr;

  static GuidanceSpec none() { return {}; }
  static GuidanceSpec classifier_free(double gamma);
  static GuidanceSpec classifier_gradient(double gamma, const Classifier& clf);
  // Model evaluations per field query.
  std::size_t evals_per_query() const { return mode == Mode::ClassifierFree ? 2 : 1; }
  void validate() const;
};
std::string to_string(GuidanceSpec::Mode mode);

struct SampleTrace {
  Tensor z_final;
  Tensor x_final;
  std::size_t nfe = 0;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::vector<std::pair<double, Tensor>> trajectory;
  double wall_ms = 0.0;
};

// max_nfe would be exceeded; carries the trace up to that point.
class TruncationError : public std::runtime_error {
 public:
  TruncationError(const std::string& what, SampleTrace partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const SampleTrace& partial() const { return partial_; }

 private:
  SampleTrace partial_;
};

// Step size fell below the underflow threshold.
class StiffnessError : public NumericError {
 public:
  using NumericError::NumericError;
};

inline constexpr double kMinStep = 1e-10;
inline constexpr double kClassifierTimeCap = 1.0 - 1e-4;

// Guided velocity at a shared time; `conditions` as in VelocityModel::forward.
Tensor guided_velocity(const VelocityModel& model, const Tensor& z, const std::vector<Condition>& conditions,
                       double t, const GuidanceSpec& guidance);
Tensor guided_velocity(const VelocityModel& model, const Tensor& z, const Condition& condition, double t,
                       const GuidanceSpec& guidance);

Field make_field(const VelocityModel& model, std::vector<Condition> conditions, GuidanceSpec guidance);

// Integrates from t = 1 to t = 0 treating z1 as one state. Each field query
// costs `evals_per_query` towards the NFE count.
SampleTrace integrate_field(const Field& field, const Tensor& z1, const SolverSpec& solver,
                            std::size_t evals_per_query = 1);

SampleTrace integrate(const VelocityModel& model, const Codec& codec, const Tensor& z1,
                      const std::vector<Condition>& conditions, const SolverSpec& solver,
                      const GuidanceSpec& guidance);

// One trace per row of z1. Fixed-step solvers integrate all rows together
// (rows never interact, so each row equals its single-row run); the adaptive
// solver integrates each row separately.
std::vector<SampleTrace> integrate_rows(const VelocityModel& model, const Codec& codec, const Tensor& z1,
                                        const std::vector<Condition>& conditions, const SolverSpec& solver,
                                        const GuidanceSpec& guidance, bool record_timing = true);

struct Dopri5Result {
  Tensor z_new;
  double h_new = 0.0;
  bool accepted = false;
  double error_norm = 0.0;
  Tensor k_last;  // f(z_new, t - h), reusable as the next first stage
};

// One attempted step from t to t - h (h in (0, t]). `k1` is f(z, t); when
// empty it is evaluated here (one extra evaluation). `err_prev` feeds the
// PI controller.
Dopri5Result dopri5_step(const Field& field, const Tensor& z, double t, double h, double rtol, double atol,
                         const Tensor& k1 = Tensor(), double err_prev = 1e-4);

std::size_t nfe_of(const SampleTrace& trace);
// NFE a fixed-step solver spends for one sample.
std::size_t fixed_step_nfe(const SolverSpec& solver, const GuidanceSpec& guidance);

// Noise for sample `index` under `seed`; independent of how samples are batched.
Tensor sample_noise(std::uint64_t seed, std::size_t index, std::size_t dim);

void write_traces_jsonl(const std::filesystem::path& path, const std::vector<SampleTrace>& traces,
                        std::uint64_t seed, std::size_t first_index = 0);
void write_trajectories_csv(const std::filesystem::path& path, const std::vector<SampleTrace>& traces);

}  // namespace lfm
