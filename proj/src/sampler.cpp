#include "lfm/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace lfm {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_finite(const Tensor& z, double t) {
  if (!z.all_finite()) throw NumericError("non-finite solver state at t=" + std::to_string(t));
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kAlpha = 0.7 / 5.0;
constexpr double kBeta = 0.4 / 5.0;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kInitialStep = 1.0 / 100.0;

// z + dt * sum_i coef_i k_i
Tensor combine(const Tensor& z, double dt, std::initializer_list<std::pair<double, const Tensor*>> terms) {
  Tensor out = z;
  auto o = out.data();
  for (std::size_t j = 0; j < o.size(); ++j) {
    double acc = 0.0;
    for (const auto& [c, k] : terms) acc += c * (*k)[j];
    o[j] += dt * acc;
  }
  return out;
}

std::vector<Condition> null_conditions() { return {Condition::none()}; }

bool all_null(const std::vector<Condition>& conditions) {
  return std::all_of(conditions.begin(), conditions.end(),
                     [](const Condition& c) { return c.kind == Condition::Kind::None; });
}

std::vector<SampleTrace> split_rows(const SampleTrace& joint) {
  const std::size_t n = joint.z_final.rows();
  std::vector<SampleTrace> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    SampleTrace& tr = out[i];
    tr.z_final = joint.z_final.row_slice(i, i + 1);
    if (!joint.x_final.empty()) tr.x_final = joint.x_final.row_slice(i, i + 1);
    tr.nfe = joint.nfe;
    tr.accepted_steps = joint.accepted_steps;
    tr.rejected_steps = joint.rejected_steps;
    tr.wall_ms = joint.wall_ms / static_cast<double>(n);
    for (const auto& [t, z] : joint.trajectory) tr.trajectory.emplace_back(t, z.row_slice(i, i + 1));
  }
  return out;
}

std::vector<Condition> conditions_for_row(const std::vector<Condition>& conditions, std::size_t i) {
  if (conditions.size() == 1) return conditions;
  return {conditions.at(i)};
}

}  // namespace

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Euler: return "euler";
    case SolverKind::Heun: return "heun";
    case SolverKind::DormandPrince: return "dopri5";
  }
  return "unknown";
}

SolverKind solver_kind_from_string(const std::string& s) {
  if (s == "euler") return SolverKind::Euler;
  if (s == "heun") return SolverKind::Heun;
  if (s == "dopri5" || s == "adaptive") return SolverKind::DormandPrince;
  throw ConfigError("unknown solver '" + s + "' (expected euler, heun or dopri5)");
}

std::string to_string(GuidanceSpec::Mode mode) {
  switch (mode) {
    case GuidanceSpec::Mode::None: return "none";
    case GuidanceSpec::Mode::ClassifierFree: return "classifier_free";
    case GuidanceSpec::Mode::ClassifierGradient: return "classifier_gradient";
  }
  return "unknown";
}

SolverSpec SolverSpec::euler(std::size_t steps) {
  SolverSpec s;
  s.kind = SolverKind::Euler;
  s.steps = steps;
  return s;
}

SolverSpec SolverSpec::heun(std::size_t steps) {
  SolverSpec s;
  s.kind = SolverKind::Heun;
  s.steps = steps;
  return s;
}

SolverSpec SolverSpec::dopri5(double rtol, double atol) {
  SolverSpec s;
  s.kind = SolverKind::DormandPrince;
  s.rtol = rtol;
  s.atol = atol;
  return s;
}

void SolverSpec::validate() const {
  if (steps < 1) throw ConfigError("solver.steps must be >= 1");
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("solver.rtol and solver.atol must be > 0");
  if (max_nfe < 1) throw ConfigError("solver.max_nfe must be >= 1");
}

nlohmann::json SolverSpec::to_json() const {
  return {{"kind", to_string(kind)}, {"steps", steps}, {"rtol", rtol},
          {"atol", atol},           {"max_nfe", max_nfe}, {"record_trajectory", record_trajectory}};
}

GuidanceSpec GuidanceSpec::classifier_free(double gamma) {
  GuidanceSpec g;
  g.mode = Mode::ClassifierFree;
  g.gamma = gamma;
  return g;
}

GuidanceSpec GuidanceSpec::classifier_gradient(double gamma, const Classifier& clf) {
  GuidanceSpec g;
  g.mode = Mode::ClassifierGradient;
  g.gamma = gamma;
  g.classifier = &clf;
  return g;
}

void GuidanceSpec::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("guidance.gamma must be finite and >= 0");
  if (mode == Mode::ClassifierGradient && classifier == nullptr) {
    throw ConfigError("classifier guidance needs a classifier");
  }
}

Tensor guided_velocity(const VelocityModel& model, const Tensor& z, const std::vector<Condition>& conditions,
                       double t, const GuidanceSpec& guidance) {
  guidance.validate();
  switch (guidance.mode) {
    case GuidanceSpec::Mode::None: return model.velocity(z, conditions, t);
    case GuidanceSpec::Mode::ClassifierFree: {
      if (all_null(conditions)) throw ContractError("classifier-free guidance with the null condition");
      Tensor vc = model.velocity(z, conditions, t);
      Tensor vu = model.velocity(z, null_conditions(), t);
      const double gamma = guidance.gamma;
      if (gamma == 1.0) return vc;
      if (gamma == 0.0) return vu;
      Tensor out = vc;
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = gamma * vc[j] + (1.0 - gamma) * vu[j];
      return out;
    }
    case GuidanceSpec::Mode::ClassifierGradient: {
      std::vector<std::size_t> labels;
      for (const auto& c : conditions) {
        if (c.kind != Condition::Kind::Label) throw ContractError("classifier guidance needs label conditions");
        labels.push_back(c.label);
      }
      const double tc = std::min(t, kClassifierTimeCap);
      Tensor vu = model.velocity(z, null_conditions(), t);
      Tensor grad = classifier_log_prob_gradient(*guidance.classifier, z, labels, tc);
      return axpy(vu, -guidance.gamma * tc / (1.0 - tc), grad);
    }
  }
  throw ContractError("unknown guidance mode");
}

Tensor guided_velocity(const VelocityModel& model, const Tensor& z, const Condition& condition, double t,
                       const GuidanceSpec& guidance) {
  return guided_velocity(model, z, std::vector<Condition>{condition}, t, guidance);
}

Field make_field(const VelocityModel& model, std::vector<Condition> conditions, GuidanceSpec guidance) {
  guidance.validate();
  return [&model, conditions = std::move(conditions), guidance](const Tensor& z, double t) {
    return guided_velocity(model, z, conditions, t, guidance);
  };
}

Dopri5Result dopri5_step(const Field& field, const Tensor& z, double t, double h, double rtol, double atol,
                         const Tensor& k1_in, double err_prev) {
  if (!(h > 0.0) || h > t * (1.0 + 1e-12)) throw ContractError("dopri5_step: h must lie in (0, t]");
  const double dt = -h;
  const Tensor k1 = k1_in.empty() ? field(z, t) : k1_in;
  const Tensor k2 = field(combine(z, dt, {{a21, &k1}}), t + c2 * dt);
  const Tensor k3 = field(combine(z, dt, {{a31, &k1}, {a32, &k2}}), t + c3 * dt);
  const Tensor k4 = field(combine(z, dt, {{a41, &k1}, {a42, &k2}, {a43, &k3}}), t + c4 * dt);
  const Tensor k5 = field(combine(z, dt, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}), t + c5 * dt);
  const Tensor k6 = field(combine(z, dt, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}), t + dt);
  Tensor z_new = combine(z, dt, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
  const double t_new = h >= t ? 0.0 : t - h;
  Tensor k7 = field(z_new, t_new);

  double acc = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double err =
        dt * (e1 * k1[j] + e3 * k3[j] + e4 * k4[j] + e5 * k5[j] + e6 * k6[j] + e7 * k7[j]);
    const double scale = atol + rtol * std::max(std::abs(z[j]), std::abs(z_new[j]));
    acc += (err / scale) * (err / scale);
  }
  const double norm = std::sqrt(acc / static_cast<double>(z.size()));

  Dopri5Result r;
  r.error_norm = norm;
  if (!std::isfinite(norm)) {
    r.accepted = false;
    r.h_new = h * kMinFactor;
    return r;
  }
  r.accepted = norm <= 1.0;
  double factor;
  if (r.accepted) {
    factor = norm == 0.0 ? kMaxFactor
                         : kSafety * std::pow(norm, -kAlpha) * std::pow(std::max(err_prev, 1e-4), kBeta);
    factor = std::clamp(factor, kMinFactor, kMaxFactor);
    r.z_new = std::move(z_new);
    r.k_last = std::move(k7);
  } else {
    factor = std::clamp(kSafety * std::pow(norm, -1.0 / 5.0), kMinFactor, 1.0);
  }
  r.h_new = h * factor;
  return r;
}

SampleTrace integrate_field(const Field& field, const Tensor& z1, const SolverSpec& solver,
                            std::size_t evals_per_query) {
  solver.validate();
  const auto start = Clock::now();
  SampleTrace tr;
  Tensor z = z1;
  check_finite(z, 1.0);
  if (solver.record_trajectory) tr.trajectory.emplace_back(1.0, z);

  auto truncate = [&](double t) {
    tr.z_final = z;
    tr.wall_ms = elapsed_ms(start);
    throw TruncationError("max_nfe " + std::to_string(solver.max_nfe) + " reached at t=" + std::to_string(t), tr);
  };

  if (solver.kind == SolverKind::Euler || solver.kind == SolverKind::Heun) {
    const std::size_t n = solver.steps;
    const std::size_t per_step = (solver.kind == SolverKind::Heun ? 2 : 1) * evals_per_query;
    for (std::size_t k = n; k-- > 0;) {
      const double t_hi = static_cast<double>(k + 1) / static_cast<double>(n);
      const double t_lo = static_cast<double>(k) / static_cast<double>(n);
      const double h = t_lo - t_hi;
      if (tr.nfe + per_step > solver.max_nfe) truncate(t_hi);
      const Tensor k1 = field(z, t_hi);
      if (solver.kind == SolverKind::Euler) {
        z = axpy(z, h, k1);
      } else {
        const Tensor zp = axpy(z, h, k1);
        const Tensor k2 = field(zp, t_lo);
        auto zd = z.data();
        for (std::size_t j = 0; j < zd.size(); ++j) zd[j] += 0.5 * h * (k1[j] + k2[j]);
      }
      tr.nfe += per_step;
      ++tr.accepted_steps;
      check_finite(z, t_lo);
      if (solver.record_trajectory) tr.trajectory.emplace_back(t_lo, z);
    }
  } else {
    double t = 1.0;
    double h = kInitialStep;
    double err_prev = 1e-4;
    if (tr.nfe + evals_per_query > solver.max_nfe) truncate(t);
    Tensor k1 = field(z, t);
    tr.nfe += evals_per_query;
    while (t > 0.0) {
      if (tr.nfe + 6 * evals_per_query > solver.max_nfe) truncate(t);
      h = std::min(h, t);
      if (t - h < kMinStep) h = t;
      Dopri5Result r = dopri5_step(field, z, t, h, solver.rtol, solver.atol, k1, err_prev);
      tr.nfe += 6 * evals_per_query;
      if (r.accepted) {
        t = h >= t ? 0.0 : t - h;
        z = std::move(r.z_new);
        k1 = std::move(r.k_last);
        err_prev = r.error_norm;
        ++tr.accepted_steps;
        check_finite(z, t);
        if (solver.record_trajectory) tr.trajectory.emplace_back(t, z);
      } else {
        ++tr.rejected_steps;
        if (r.h_new < kMinStep) {
          throw StiffnessError("dopri5 step size underflow (h=" + std::to_string(r.h_new) + ") at t=" +
                               std::to_string(t));
        }
      }
      h = r.h_new;
    }
  }
  tr.z_final = std::move(z);
  tr.wall_ms = elapsed_ms(start);
  return tr;
}

SampleTrace integrate(const VelocityModel& model, const Codec& codec, const Tensor& z1,
                      const std::vector<Condition>& conditions, const SolverSpec& solver,
                      const GuidanceSpec& guidance) {
  SampleTrace tr = integrate_field(make_field(model, conditions, guidance), z1, solver, guidance.evals_per_query());
  tr.x_final = codec.decode(tr.z_final);
  return tr;
}

std::vector<SampleTrace> integrate_rows(const VelocityModel& model, const Codec& codec, const Tensor& z1,
                                        const std::vector<Condition>& conditions, const SolverSpec& solver,
                                        const GuidanceSpec& guidance, bool record_timing) {
  std::vector<SampleTrace> out;
  if (solver.kind != SolverKind::DormandPrince) {
    out = split_rows(integrate(model, codec, z1, conditions, solver, guidance));
  } else {
    for (std::size_t i = 0; i < z1.rows(); ++i) {
      out.push_back(
          integrate(model, codec, z1.row_slice(i, i + 1), conditions_for_row(conditions, i), solver, guidance));
    }
  }
  if (!record_timing) {
    for (auto& tr : out) tr.wall_ms = 0.0;
  }
  return out;
}

std::size_t nfe_of(const SampleTrace& trace) { return trace.nfe; }

std::size_t fixed_step_nfe(const SolverSpec& solver, const GuidanceSpec& guidance) {
  if (solver.kind == SolverKind::DormandPrince) throw ContractError("adaptive NFE is not known in advance");
  return solver.steps * (solver.kind == SolverKind::Heun ? 2 : 1) * guidance.evals_per_query();
}

Tensor sample_noise(std::uint64_t seed, std::size_t index, std::size_t dim) {
  return Rng(seed).split("sample").split(index).normal_tensor(1, dim);
}

void write_traces_jsonl(const std::filesystem::path& path, const std::vector<SampleTrace>& traces,
                        std::uint64_t seed, std::size_t first_index) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const SampleTrace& tr = traces[i];
    nlohmann::json rec{{"seed", seed},
                       {"index", first_index + i},
                       {"nfe", tr.nfe},
                       {"accepted", tr.accepted_steps},
                       {"rejected", tr.rejected_steps},
                       {"z_final", tr.z_final.data()},
                       {"x_final", tr.x_final.data()},
                       {"wall_ms", tr.wall_ms}};
    out << rec.dump() << '\n';
  }
}

void write_trajectories_csv(const std::filesystem::path& path, const std::vector<SampleTrace>& traces) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  std::size_t d = 0;
  for (const auto& tr : traces) {
    if (!tr.trajectory.empty()) d = tr.trajectory.front().second.size();
  }
  out << "sample,t";
  for (std::size_t j = 0; j < d; ++j) out << ",z" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (const auto& [t, z] : traces[i].trajectory) {
      out << i << ',' << t;
      for (double v : z.data()) out << ',' << v;
      out << '\n';
    }
  }
}

}  // namespace lfm
