#include "lfm/commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lfm/checkpoint.hpp"
#include "lfm/errors.hpp"
#include "lfm/metrics.hpp"
#include "lfm/run_config.hpp"
#include "lfm/sampler.hpp"
#include "lfm/trainer.hpp"

#ifndef LFM_BUILD_ID
#define LFM_BUILD_ID "unknown"
#endif

namespace lfm {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

class Run {
 public:
  Run(std::string command, const CommandOptions& opts) : command_(std::move(command)), start_(Clock::now()) {
    json user = read_json_file(opts.config);
    if (!user.is_object()) throw ConfigError("/: config must be a JSON object");
    for (const auto& o : opts.overrides) apply_override(user, o);
    apply_flags(user, opts);
    resolved_ = resolve_config(user);
    out_ = output_dir_of(resolved_);
    fs::create_directories(out_);
    timing_ = resolved_.at("metrics").at("record_timing").get<bool>();
    // Paths inside the echo are relative to the output directory so that a
    // rerun into a fresh directory reproduces the file byte-for-byte.
    json echo = resolved_;
    echo["output_dir"] = ".";
    write_json("resolved_config_" + file_tag() + ".json", echo);
  }

  const json& config() const { return resolved_; }
  const fs::path& out() const { return out_; }
  bool timing() const { return timing_; }
  std::uint64_t seed() const { return resolved_.at("seed").get<std::uint64_t>(); }
  fs::path path(const std::string& name) const { return out_ / name; }

  void add(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  void write_json(const std::string& name, const json& j) {
    std::ofstream f(out_ / name, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + (out_ / name).string());
    f << j.dump(2) << '\n';
    add(name);
  }

  void finish() {
    json files = json::array();
    for (const auto& name : files_) {
      const fs::path p = out_ / name;
      files.push_back({{"path", name}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
    }
    json manifest{{"command", command_},
                  {"build_id", LFM_BUILD_ID},
                  {"output_dir", fs::absolute(out_).string()},
                  {"config", resolved_},
                  {"wall_ms", timing_ ? std::chrono::duration<double, std::milli>(Clock::now() - start_).count() : 0.0},
                  {"files", files}};
    std::ofstream f(out_ / ("manifest_" + file_tag() + ".json"), std::ios::binary | std::ios::trunc);
    f << manifest.dump(2) << '\n';
  }

 private:
  std::string file_tag() const {
    std::string tag = command_;
    std::replace(tag.begin(), tag.end(), '-', '_');
    return tag;
  }

  static void apply_flags(json& user, const CommandOptions& opts) {
    if (opts.n) user["solver"]["n_samples"] = *opts.n;
    if (opts.solver) user["solver"]["kind"] = *opts.solver;
    if (opts.steps) user["solver"]["steps"] = *opts.steps;
    if (opts.rtol) user["solver"]["rtol"] = *opts.rtol;
    if (opts.atol) user["solver"]["atol"] = *opts.atol;
    if (opts.label) user["guidance"]["label"] = *opts.label;
    if (opts.gamma) {
      user["guidance"]["gamma"] = *opts.gamma;
      const json& g = user["guidance"];
      if (!g.contains("mode") || g.at("mode") == "none") user["guidance"]["mode"] = "classifier_free";
    }
  }

  std::string command_;
  Clock::time_point start_;
  json resolved_;
  fs::path out_;
  bool timing_ = true;
  std::vector<std::string> files_;
};

Codec obtain_codec(Run& run, const DataSplit& data, std::ostream& log, bool allow_train) {
  if (!codec_needs_training(run.config())) return build_codec(run.config(), data.train.dim());
  const fs::path ckpt = run.path("codec.ckpt");
  if (fs::exists(ckpt)) {
    Codec codec = Codec::from_checkpoint(load_checkpoint(ckpt));
    if (codec.data_dim() != data.train.dim()) throw ConfigError("/codec: stored codec has the wrong data dimension");
    return codec;
  }
  if (!allow_train) throw ConfigError("/codec: no trained codec in output_dir (run train-codec or train first)");
  Codec codec = build_codec(run.config(), data.train.dim());
  log << "training codec (" << run.config().at("codec").at("kind").get<std::string>() << ")\n";
  const CodecReport report = train_codec(codec, data.train.samples, codec_train_config(run.config()),
                                         Rng(stream_seed(run.seed(), "codec_train")));
  save_checkpoint(ckpt, codec.to_checkpoint());
  run.add("codec.ckpt");
  run.write_json("codec_report.json", report.to_json());
  return codec;
}

VelocityModel load_model(const Run& run) {
  const fs::path p = run.path("model.ckpt");
  if (!fs::exists(p)) throw ConfigError("no model.ckpt in " + run.out().string() + " (run train first)");
  return VelocityModel::from_checkpoint(load_checkpoint(p));
}

const Dataset& condition_source(const DataSplit& data) {
  return data.holdout.size() > 0 ? data.holdout : data.train;
}

// Per-row conditions for n samples and the label written next to each sample.
std::vector<Condition> sample_conditions(const VelocityModel& model, const Codec& codec, const DataSplit& data,
                                         const json& cfg, std::size_t n, std::vector<long>& labels) {
  const VelocityConfig& vc = model.config();
  labels.assign(n, -1);
  if (!vc.uses_labels() && !vc.uses_mask() && !vc.uses_semantic()) return {Condition::none()};
  std::vector<Condition> conds;
  conds.reserve(n);
  if (vc.uses_labels()) {
    const long fixed = cfg.at("guidance").at("label").get<long>();
    if (fixed >= static_cast<long>(vc.num_classes)) throw ConfigError("/guidance/label: out of range");
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = fixed >= 0 ? static_cast<std::size_t>(fixed) : i % vc.num_classes;
      labels[i] = static_cast<long>(c);
      conds.push_back(Condition::with_label(c));
    }
    return conds;
  }
  const Dataset& src = condition_source(data);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i % src.size();
    conds.push_back(dataset_condition(model, codec, src, j));
    if (src.has_labels()) labels[i] = static_cast<long>(src.labels[j]);
  }
  return conds;
}

GuidanceSpec guidance_of(const json& cfg, const Classifier* clf) {
  const json& g = cfg.at("guidance");
  const std::string mode = g.at("mode").get<std::string>();
  const double gamma = g.at("gamma").get<double>();
  if (mode == "classifier_free") return GuidanceSpec::classifier_free(gamma);
  if (mode == "classifier_gradient") {
    if (clf == nullptr) throw ConfigError("/guidance/mode: classifier guidance needs classifier.ckpt (run train)");
    return GuidanceSpec::classifier_gradient(gamma, *clf);
  }
  return GuidanceSpec::none();
}

Tensor noise_batch(std::uint64_t seed, std::size_t n, std::size_t d) {
  Tensor z({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor r = sample_noise(seed, i, d);
    for (std::size_t j = 0; j < d; ++j) z.at(i, j) = r[j];
  }
  return z;
}

Tensor stack_x(const std::vector<SampleTrace>& traces) {
  std::vector<Tensor> rows;
  rows.reserve(traces.size());
  for (const auto& t : traces) rows.push_back(t.x_final);
  return concat_rows(rows);
}

void write_samples_csv(const fs::path& path, const Tensor& x, const std::vector<long>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (std::size_t j = 0; j < x.cols(); ++j) out << 'x' << j << ',';
  out << "label\n" << std::setprecision(17);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out << x.at(i, j) << ',';
    out << labels[i] << '\n';
  }
}

Tensor head_rows(const Tensor& x, std::size_t n) { return x.rows() == n ? x : x.row_slice(0, n); }

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

int cmd_train_codec(const CommandOptions& opts, std::ostream& log) {
  Run run("train-codec", opts);
  const DataSplit data = build_data(run.config());
  Codec codec = build_codec(run.config(), data.train.dim());
  CodecReport report;
  if (codec_needs_training(run.config())) {
    report = train_codec(codec, data.train.samples, codec_train_config(run.config()),
                         Rng(stream_seed(run.seed(), "codec_train")));
  } else {
    report = measure_constants(codec, data.train.samples);
  }
  save_checkpoint(run.path("codec.ckpt"), codec.to_checkpoint());
  run.add("codec.ckpt");
  run.write_json("codec_report.json", report.to_json());
  log << "codec " << to_string(codec.kind()) << ": lipschitz " << report.lipschitz_decoder << ", offset "
      << report.recon_offset_mean << '\n';
  run.finish();
  return kExitOk;
}

int cmd_train(const CommandOptions& opts, std::ostream& log) {
  Run run("train", opts);
  const DataSplit data = build_data(run.config());
  const Codec codec = obtain_codec(run, data, log, true);
  Rng init(stream_seed(run.seed(), "init"));
  VelocityModel model(velocity_config(run.config(), data.train, codec.latent_dim()), init);
  TrainConfig tc = train_config(run.config());
  tc.log_path = run.path("train_log.jsonl");
  tc.checkpoint_dir = run.out();
  const bool conditional = run.config().at("model").at("conditioning").get<std::string>() != "none";
  TrainRecord record;
  try {
    record = conditional ? train_conditional(codec, model, data.train, tc)
                         : train_unconditional(codec, model, data.train, tc);
  } catch (const TrainingDivergence& e) {
    save_checkpoint(run.path("model_last_good.ckpt"), e.last_good());
    run.add("model_last_good.ckpt");
    run.add("train_log.jsonl");
    run.finish();
    throw;
  }
  run.add("train_log.jsonl");
  if (tc.checkpoint_every > 0) {
    for (std::size_t s = tc.checkpoint_every; s <= record.losses.size(); s += tc.checkpoint_every) {
      run.add("model_step" + std::to_string(s) + ".ckpt");
    }
  }
  run.add("model.ckpt");
  run.write_json("train_record.json", record.summary());
  log << "trained " << record.losses.size() << " steps, final epoch loss "
      << (record.epochs.empty() ? 0.0 : record.epochs.back().mean_loss) << '\n';

  if (run.config().at("guidance").at("mode").get<std::string>() == "classifier_gradient") {
    if (!data.train.has_labels()) throw ConfigError("/guidance/mode: classifier guidance needs labeled data");
    Rng clf_init(stream_seed(run.seed(), "classifier_init"));
    Classifier clf(classifier_config(run.config(), codec.latent_dim(), data.train.num_classes), clf_init);
    const auto losses = train_classifier(codec, clf, data.train, classifier_train_config(run.config()));
    save_checkpoint(run.path("classifier.ckpt"), clf.to_checkpoint());
    run.add("classifier.ckpt");
    log << "classifier final loss " << (losses.empty() ? 0.0 : losses.back()) << '\n';
  }
  run.finish();
  return kExitOk;
}

int cmd_sample(const CommandOptions& opts, std::ostream& log) {
  Run run("sample", opts);
  const json& cfg = run.config();
  const DataSplit data = build_data(cfg);
  const Codec codec = obtain_codec(run, data, log, false);
  const VelocityModel model = load_model(run);
  std::optional<Classifier> clf;
  if (fs::exists(run.path("classifier.ckpt"))) clf = Classifier::from_checkpoint(load_checkpoint(run.path("classifier.ckpt")));
  const GuidanceSpec guidance = guidance_of(cfg, clf ? &*clf : nullptr);
  const SolverSpec solver = solver_spec(cfg);
  const std::size_t n = cfg.at("solver").at("n_samples").get<std::size_t>();
  if (n == 0) throw ConfigError("/solver/n_samples: must be positive");

  std::vector<long> labels;
  const auto conds = sample_conditions(model, codec, data, cfg, n, labels);
  const Tensor z1 = noise_batch(stream_seed(run.seed(), "sample"), n, codec.latent_dim());
  const auto traces = integrate_rows(model, codec, z1, conds, solver, guidance, run.timing());

  write_samples_csv(run.path("samples.csv"), stack_x(traces), labels);
  run.add("samples.csv");
  write_traces_jsonl(run.path("traces.jsonl"), traces, run.seed());
  run.add("traces.jsonl");
  if (solver.record_trajectory) {
    write_trajectories_csv(run.path("trajectories.csv"), traces);
    run.add("trajectories.csv");
  }
  log << "sampled " << n << " with " << to_string(solver.kind) << ", nfe/sample " << traces.front().nfe << '\n';
  run.finish();
  return kExitOk;
}

int cmd_eval(const CommandOptions& opts, std::ostream& log) {
  Run run("eval", opts);
  const json& cfg = run.config();
  const fs::path samples_path = opts.samples.empty() ? run.path("samples.csv") : opts.samples;
  const Dataset gen = import_csv(samples_path);
  Dataset ref;
  if (opts.reference.empty()) {
    ref = condition_source(build_data(cfg));
  } else {
    ref = import_csv(opts.reference);
  }
  if (gen.dim() != ref.dim()) throw ConfigError("samples and reference have different widths");
  const std::size_t n =
      std::min({gen.size(), ref.size(), cfg.at("metrics").at("eval_max_points").get<std::size_t>(), kMaxAssignmentSize});
  if (n < 2) throw ConfigError("eval needs at least two samples");
  const Tensor a = head_rows(gen.samples, n), b = head_rows(ref.samples, n);
  const double w2_sq = w2_empirical(a, b);
  const double mmd = mmd_rbf(a, b);

  std::vector<std::string> header{"n", "w2", "w2_sq", "mmd2"};
  std::vector<std::string> row;
  auto num = [](double v) {
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  };
  row = {std::to_string(n), num(std::sqrt(w2_sq)), num(w2_sq), num(mmd)};

  const fs::path traces_path = opts.traces.empty() ? samples_path.parent_path() / "traces.jsonl" : opts.traces;
  double nfe_sum = 0.0, wall = 0.0;
  std::size_t nfe_min = 0, nfe_max = 0, count = 0;
  if (fs::exists(traces_path)) {
    std::ifstream in(traces_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      const auto nfe = rec.at("nfe").get<std::size_t>();
      nfe_min = count == 0 ? nfe : std::min(nfe_min, nfe);
      nfe_max = std::max(nfe_max, nfe);
      nfe_sum += static_cast<double>(nfe);
      wall += rec.at("wall_ms").get<double>();
      ++count;
    }
  }
  header.insert(header.end(), {"nfe_mean", "nfe_min", "nfe_max", "wall_ms"});
  row.insert(row.end(), {num(count ? nfe_sum / static_cast<double>(count) : 0.0), std::to_string(nfe_min),
                         std::to_string(nfe_max), num(run.timing() ? wall : 0.0)});

  if (gen.has_labels() && ref.has_labels()) {
    const std::size_t classes = std::max(gen.num_classes, ref.num_classes);
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> ia, ib;
      for (std::size_t i = 0; i < gen.size(); ++i) {
        if (gen.labels[i] == c) ia.push_back(i);
      }
      for (std::size_t i = 0; i < ref.size(); ++i) {
        if (ref.labels[i] == c) ib.push_back(i);
      }
      const std::size_t m = std::min({ia.size(), ib.size(), kMaxAssignmentSize});
      header.push_back("w2_class_" + std::to_string(c));
      if (m == 0) {
        row.push_back("nan");
        continue;
      }
      ia.resize(m);
      ib.resize(m);
      row.push_back(num(std::sqrt(w2_empirical(subset(gen, ia).samples, subset(ref, ib).samples))));
    }
  }
  std::ofstream out(run.path("eval.csv"), std::ios::binary | std::ios::trunc);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
  out << '\n';
  out.close();
  run.add("eval.csv");
  log << "w2 " << row[1] << ", mmd2 " << row[3] << '\n';
  run.finish();
  return kExitOk;
}

int cmd_bench_solvers(const CommandOptions& opts, std::ostream& log) {
  Run run("bench-solvers", opts);
  const json& cfg = run.config();
  const json& bench = cfg.at("metrics").at("bench");
  const DataSplit data = build_data(cfg);
  const Codec codec = obtain_codec(run, data, log, false);
  const VelocityModel model = load_model(run);
  const Dataset& ref_data = condition_source(data);
  const std::size_t n = std::min({bench.at("n_samples").get<std::size_t>(), ref_data.size(), kMaxAssignmentSize});
  if (n < 2) throw ConfigError("/metrics/bench/n_samples: need at least two samples");
  const Tensor ref = head_rows(ref_data.samples, n);
  std::optional<Classifier> clf;
  if (fs::exists(run.path("classifier.ckpt"))) clf = Classifier::from_checkpoint(load_checkpoint(run.path("classifier.ckpt")));
  const GuidanceSpec guidance = guidance_of(cfg, clf ? &*clf : nullptr);
  std::vector<long> labels;
  const auto conds = sample_conditions(model, codec, data, cfg, n, labels);
  const Tensor z1 = noise_batch(stream_seed(run.seed(), "sample"), n, codec.latent_dim());
  SolverSpec base = solver_spec(cfg);
  base.record_trajectory = false;

  std::ofstream out(run.path("bench_solvers.csv"), std::ios::binary | std::ios::trunc);
  out << "solver,steps,rtol,atol,nfe,w2,w2_sq,wall_ms\n" << std::setprecision(17);
  auto run_one = [&](SolverSpec spec) {
    const auto start = Clock::now();
    const auto traces = integrate_rows(model, codec, z1, conds, spec, guidance, run.timing());
    const double ms = run.timing() ? std::chrono::duration<double, std::milli>(Clock::now() - start).count() : 0.0;
    double nfe = 0.0, steps = 0.0;
    for (const auto& t : traces) {
      nfe += static_cast<double>(t.nfe);
      steps += static_cast<double>(t.accepted_steps);
    }
    nfe /= static_cast<double>(traces.size());
    steps /= static_cast<double>(traces.size());
    const double w2_sq = w2_empirical(stack_x(traces), ref);
    out << to_string(spec.kind) << ',' << steps << ',';
    if (spec.kind == SolverKind::DormandPrince) out << spec.rtol << ',' << spec.atol;
    else out << ',';
    out << ',' << nfe << ','
        << std::sqrt(w2_sq) << ',' << w2_sq << ',' << ms << '\n';
    log << to_string(spec.kind) << " nfe " << nfe << " w2 " << std::sqrt(w2_sq) << '\n';
  };
  for (auto steps : bench.at("euler_steps").get<std::vector<std::size_t>>()) {
    SolverSpec s = base;
    s.kind = SolverKind::Euler;
    s.steps = steps;
    run_one(s);
  }
  for (auto steps : bench.at("heun_steps").get<std::vector<std::size_t>>()) {
    SolverSpec s = base;
    s.kind = SolverKind::Heun;
    s.steps = steps;
    run_one(s);
  }
  for (auto tol : bench.at("tolerances").get<std::vector<double>>()) {
    SolverSpec s = base;
    s.kind = SolverKind::DormandPrince;
    s.rtol = tol;
    s.atol = tol;
    run_one(s);
  }
  out.close();
  run.add("bench_solvers.csv");
  run.finish();
  return kExitOk;
}

int cmd_bound_check(const CommandOptions& opts, std::ostream& log) {
  Run run("bound-check", opts);
  const json& cfg = run.config();
  const GaussianEndpointSpec spec = gaussian_spec_of(cfg);
  const DataSplit data = build_data(cfg);
  const Codec codec = obtain_codec(run, data, log, false);
  const VelocityModel model = load_model(run);
  if (model.config().uses_labels() || model.config().uses_mask() || model.config().uses_semantic()) {
    throw ConfigError("/model/conditioning: the bound check needs an unconditional model");
  }
  const GaussianEndpointSpec latent = latent_gaussian(codec, spec);
  const json& b = cfg.at("metrics").at("bound");
  const std::size_t n = b.at("n_samples").get<std::size_t>();
  if (n < 2 || n > kMaxAssignmentSize) throw ConfigError("/metrics/bound/n_samples: must lie in [2, 2048]");
  const PathSpec path = path_spec(cfg);

  const Tensor z1 = noise_batch(stream_seed(run.seed(), "bound_sample"), n, codec.latent_dim());
  const SampleTrace tr = integrate(model, codec, z1, {Condition::none()}, solver_spec(cfg), GuidanceSpec::none());
  Tensor reference;
  if (b.at("empirical_check").get<bool>() && path.kind == PathKind::ConstantVelocity) {
    // The exact flow between Gaussians is affine: z1 maps to m + s z1.
    Tensor z0 = z1;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < z0.cols(); ++j) z0.at(i, j) = latent.mean0[j] + latent.sigma0 * z1.at(i, j);
    }
    reference = codec.decode(z0);
  }
  BoundOptions bo;
  bo.n_t = b.at("n_t").get<std::size_t>();
  bo.n_x = b.at("n_x").get<std::size_t>();
  bo.null_draws = b.at("null_draws").get<std::size_t>();
  bo.seed = stream_seed(run.seed(), "bound");
  const BoundReport report = check_bound(model, codec, spec, path, data.train.samples, tr.x_final, reference, bo);
  run.write_json("bound_report.json", report.to_json());
  log << "bound: lhs " << report.lhs_w2_sq << " rhs " << report.rhs << (report.satisfied ? " satisfied" : " VIOLATED")
      << '\n';
  run.finish();
  return report.satisfied ? kExitOk : kExitNumeric;
}

int run_command(const std::string& name, const CommandOptions& opts, std::ostream& log) {
  try {
    if (name == "train-codec") return cmd_train_codec(opts, log);
    if (name == "train") return cmd_train(opts, log);
    if (name == "sample") return cmd_sample(opts, log);
    if (name == "eval") return cmd_eval(opts, log);
    if (name == "bench-solvers") return cmd_bench_solvers(opts, log);
    if (name == "bound-check") return cmd_bound_check(opts, log);
    log << "error: unknown command '" << name << "'\n";
    return kExitConfig;
  } catch (const TrainingDivergence& e) {
    log << "error: training diverged: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const TruncationError& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    log << "error: config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::logic_error& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}

}  // namespace lfm
