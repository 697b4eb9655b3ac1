#include "relurec/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "relurec/gauss_expect.hpp"

namespace relurec {

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

void reject_unknown_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("config: unknown key \"" + item.key() + "\" in " + where);
  }
}

template <class T>
void read_field(const ordered_json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const std::exception&) {
      throw ConfigError(std::string("config: field \"") + key + "\" has the wrong type");
    }
  }
}

ordered_json vec_json(const Vector& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  os << content;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (schema_version != 1) throw ConfigError("config: unsupported schema_version");
  if (student_m < 2 || student_m % 2 != 0) throw ConfigError("config: student m must be even >= 2");
  if (log_every < 1) throw ConfigError("config: log_every must be >= 1");
  if (mc_n < 2) throw ConfigError("config: mc_n must be >= 2");
  if (out_dir.empty()) throw ConfigError("config: out_dir must be set");
  schedule.validate();
}

ExperimentConfig parse_config(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }
  reject_unknown_keys(
      j, {"schema_version", "teacher", "student", "schedule", "diagnostics", "certify", "out_dir"},
      "top level");
  ExperimentConfig cfg;
  read_field(j, "schema_version", cfg.schema_version);
  read_field(j, "certify", cfg.certify);
  read_field(j, "out_dir", cfg.out_dir);

  if (!j.contains("teacher")) throw ConfigError("config: missing \"teacher\" section");
  const ordered_json& jt = j.at("teacher");
  reject_unknown_keys(jt, {"d", "r", "m_star", "delta_min", "a_magnitudes", "seed", "kappa_floor"},
                      "teacher");
  long d = 8, r = 2, m_star = 2;
  read_field(jt, "d", d);
  read_field(jt, "r", r);
  read_field(jt, "m_star", m_star);
  cfg.teacher.d = d;
  cfg.teacher.r = r;
  cfg.teacher.m_star = m_star;
  read_field(jt, "delta_min", cfg.teacher.delta_min);
  read_field(jt, "seed", cfg.teacher.seed);
  read_field(jt, "kappa_floor", cfg.teacher.kappa_floor);
  if (!jt.contains("a_magnitudes")) throw ConfigError("config: teacher.a_magnitudes is required");
  const auto& mags = jt.at("a_magnitudes");
  cfg.teacher.a_magnitudes.resize(static_cast<Index>(mags.size()));
  for (Index i = 0; i < cfg.teacher.a_magnitudes.size(); ++i) {
    cfg.teacher.a_magnitudes[i] = mags.at(i).get<double>();
  }

  if (!j.contains("student")) throw ConfigError("config: missing \"student\" section");
  const ordered_json& js = j.at("student");
  reject_unknown_keys(js, {"m", "seed"}, "student");
  long m = 64;
  read_field(js, "m", m);
  cfg.student_m = m;
  read_field(js, "seed", cfg.student_seed);

  if (j.contains("schedule")) {
    const ordered_json& jc = j.at("schedule");
    reject_unknown_keys(jc,
                        {"eta0", "lambda0", "eps0", "lambda_stage2", "eta2", "t2_max",
                         "stage2_tol", "lambda30", "epochs", "eta3", "per_epoch_cap",
                         "stop_factor"},
                        "schedule");
    read_field(jc, "eta0", cfg.schedule.eta0);
    read_field(jc, "lambda0", cfg.schedule.lambda0);
    read_field(jc, "eps0", cfg.schedule.eps0);
    read_field(jc, "lambda_stage2", cfg.schedule.lambda_stage2);
    read_field(jc, "eta2", cfg.schedule.eta2);
    read_field(jc, "t2_max", cfg.schedule.t2_max);
    read_field(jc, "stage2_tol", cfg.schedule.stage2_tol);
    read_field(jc, "lambda30", cfg.schedule.lambda30);
    read_field(jc, "epochs", cfg.schedule.epochs);
    read_field(jc, "eta3", cfg.schedule.eta3);
    read_field(jc, "per_epoch_cap", cfg.schedule.per_epoch_cap);
    read_field(jc, "stop_factor", cfg.schedule.stop_factor);
  }
  if (j.contains("diagnostics")) {
    const ordered_json& jd = j.at("diagnostics");
    reject_unknown_keys(jd, {"log_every", "mc_n", "mc_seed"}, "diagnostics");
    read_field(jd, "log_every", cfg.log_every);
    read_field(jd, "mc_n", cfg.mc_n);
    read_field(jd, "mc_seed", cfg.mc_seed);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::pair<double, double> default_audit_deltas(double gap, double lambda, double scale) {
  const double close = std::min(0.3, std::cbrt(std::max(gap, 1e-30)));
  double sign = std::min(M_PI / 4.0,
                         scale * lambda / std::sqrt(std::max(gap, lambda * lambda)));
  sign = std::max(sign, 2.0 * close < M_PI / 2.0 ? 2.0 * close : M_PI / 2.0);
  return {std::min(close, 0.5 * sign), sign};
}

std::string epoch_diagnostics_json(const Student& student, const Teacher& teacher, int epoch,
                                   double lambda, const McSettings& mc,
                                   const std::optional<double>& p_norm_est) {
  // the average-neuron, residual-split and audit quantities presume
  // canonical orientations (mass split across +-w is functionally identical);
  // angles and losses are orientation-invariant
  const Student canon = canonicalize_signs(student, teacher);
  const PartitionReport part = partition(canon, teacher);
  const double square = population_square_loss(student, teacher);
  const double reg = regularized_loss(student, teacher, lambda);
  const double gap = reg - lambda * teacher.a_l1();
  const ResidualNorms rn = residual_norms(canon, teacher, mc);

  ordered_json j;
  j["epoch"] = epoch;
  j["lambda"] = lambda;
  j["square_loss"] = square;
  j["reg_loss"] = reg;
  j["gap_surrogate"] = gap;
  // zeta is within +- lambda^2 |p|^2 of the surrogate when |p| is known
  if (p_norm_est) {
    j["zeta_bias_bound"] = lambda * lambda * (*p_norm_est) * (*p_norm_est);
  } else {
    j["zeta_bias_bound"] = nullptr;
  }
  j["weighted_far"] = part.weighted_far;
  ordered_json mc_angles = ordered_json::array();
  for (Index i = 0; i < teacher.m_star(); ++i) {
    mc_angles.push_back(std::isfinite(part.min_close[i]) ? ordered_json(part.min_close[i])
                                                         : ordered_json(nullptr));
  }
  j["min_close"] = mc_angles;
  j["avg_dist"] = vec_json(part.avg_dist);
  j["mass"] = vec_json(part.mass);
  j["norm_sq"] = student.a.squaredNorm() + student.w.squaredNorm();
  j["residual"] = {{"r", rn.r}, {"r1", rn.r1}, {"r2", rn.r2}, {"r2_stderr", rn.r2_stderr},
                   {"r3", rn.r3}};

  const auto [dc, ds] = default_audit_deltas(gap, lambda);
  const AuditReport audit = descent_audit(canon, teacher, lambda, dc, ds);
  j["audit"] = {{"delta_close", dc},
                {"delta_sign", ds},
                {"balance_term", audit.balance_term},
                {"cancellation_mass", vec_json(audit.cancellation_mass)},
                {"q_sq_sum", audit.q_sq_sum},
                {"inner_product", audit.inner_product},
                {"skipped_teachers", audit.skipped_teachers}};
  j["grad_lower_bound_ratio"] = lambda > 0 ? grad_lower_bound_ratio(student, teacher, lambda) : 0.0;
  return j.dump();
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path out(config.out_dir);
  fs::create_directories(out / "plotdata");

  ExperimentResult result;
  result.out_dir = config.out_dir;
  try {
    result.teacher = sample_teacher(config.teacher);
    write_file(out / "teacher.json", teacher_to_json(result.teacher));

    if (config.certify) {
      Certificate cert = assemble_certificate(result.teacher);
      verify_nondegeneracy(cert, result.teacher, 720, 1000, config.mc_seed);
      result.certificate = std::move(cert);
    }

    result.pipeline =
        run_pipeline(result.teacher, config.schedule, config.student_m, config.student_seed,
                     config.log_every);

    write_file(out / "student_final.json", student_to_json(result.pipeline.student));
    {
      std::ofstream os(out / "trace.csv", std::ios::binary);
      trace_to_csv(result.pipeline.trace, os);
    }

    std::optional<double> p_norm;
    if (result.certificate) p_norm = result.certificate->p_norm_est;
    std::ostringstream diag;
    for (size_t k = 0; k < result.pipeline.epoch_checkpoints.size(); ++k) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%02zu.json", k + 1);
      write_file(out / name, student_to_json(result.pipeline.epoch_checkpoints[k]));
      diag << epoch_diagnostics_json(result.pipeline.epoch_checkpoints[k], result.teacher,
                                     static_cast<int>(k + 1), result.pipeline.epoch_lambdas[k],
                                     {config.mc_n, config.mc_seed}, p_norm)
           << "\n";
    }
    write_file(out / "diagnostics.jsonl", diag.str());

    // plot data
    {
      std::ostringstream gap;
      gap << "row,stage,epoch,iter,lambda,gap_surrogate\n";
      char buf[200];
      long rowid = 0;
      for (const TraceRow& r : result.pipeline.trace.rows) {
        std::snprintf(buf, sizeof(buf), "%ld,%d,%d,%ld,%.17g,%.17g\n", rowid++, r.stage, r.epoch,
                      r.iter, r.lambda, r.gap_surrogate);
        gap << buf;
      }
      write_file(out / "plotdata" / "gap_vs_iteration.csv", gap.str());
    }
    {
      std::ostringstream ang;
      ang << "epoch";
      for (Index i = 0; i < result.teacher.m_star(); ++i) ang << ",min_angle_" << i;
      ang << "\n";
      for (size_t k = 0; k < result.pipeline.epoch_checkpoints.size(); ++k) {
        const PartitionReport part =
            partition(result.pipeline.epoch_checkpoints[k], result.teacher);
        ang << (k + 1);
        char buf[64];
        for (Index i = 0; i < result.teacher.m_star(); ++i) {
          std::snprintf(buf, sizeof(buf), ",%.17g", part.min_close[i]);
          ang << buf;
        }
        ang << "\n";
      }
      write_file(out / "plotdata" / "angles_vs_epoch.csv", ang.str());
    }

    // summary
    const Student& final_student = result.pipeline.student;
    const PartitionReport part = partition(final_student, result.teacher);
    int dead = 0;
    for (Index j = 0; j < final_student.width(); ++j) {
      if (std::abs(final_student.a[j]) * final_student.w.row(j).norm() <= 1e-3) ++dead;
    }
    ordered_json summary;
    summary["schema_version"] = 1;
    summary["exit"] = "ok";
    summary["final_square_loss"] = population_square_loss(final_student, result.teacher);
    ordered_json angles = ordered_json::array();
    for (Index i = 0; i < result.teacher.m_star(); ++i) {
      angles.push_back(std::isfinite(part.min_close[i]) ? ordered_json(part.min_close[i])
                                                        : ordered_json(nullptr));
    }
    summary["per_teacher_min_angle"] = angles;
    summary["dead_neuron_count"] = dead;
    summary["weighted_far"] = part.weighted_far;
    summary["norm_sq"] = final_student.a.squaredNorm() + final_student.w.squaredNorm();
    summary["epochs"] = config.schedule.epochs;
    summary["lambda_final"] = result.pipeline.epoch_lambdas.empty()
                                  ? ordered_json(nullptr)
                                  : ordered_json(result.pipeline.epoch_lambdas.back());
    if (result.certificate) {
      summary["rho_fit"] = result.certificate->rho_fit;
      summary["p_norm_est"] = result.certificate->p_norm_est;
    } else {
      summary["rho_fit"] = nullptr;
      summary["p_norm_est"] = nullptr;
    }
    write_file(out / "summary.json", summary.dump(2));
  } catch (const Error& e) {
    ordered_json summary;
    summary["schema_version"] = 1;
    summary["exit"] = "error";
    summary["error"] = e.what();
    write_file(out / "summary.json", summary.dump(2));
    throw;
  }
  return result;
}

namespace {

int run_gen_teacher(const std::string& config_path, const std::string& out_override,
                    std::optional<std::uint64_t> seed_override) {
  ExperimentConfig cfg = load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_override) cfg.teacher.seed = *seed_override;
  const Teacher t = sample_teacher(cfg.teacher);
  fs::create_directories(cfg.out_dir);
  write_file(fs::path(cfg.out_dir) / "teacher.json", teacher_to_json(t));
  std::cout << "teacher.json written to " << cfg.out_dir << " (delta=" << t.delta_sep
            << ", kappa=" << t.kappa << ")\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& out_override,
              std::optional<std::uint64_t> seed_override) {
  ExperimentConfig cfg = load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_override) cfg.student_seed = *seed_override;
  const ExperimentResult res = run_experiment(cfg);
  std::cout << "artifacts written to " << res.out_dir << "\n";
  return 0;
}

int run_diagnose(const std::string& teacher_path, const std::string& student_path, double lambda,
                 long mc_n, std::uint64_t mc_seed, const std::string& out_dir) {
  const Teacher t = teacher_from_json(read_file(teacher_path));
  const Student s = student_from_json(read_file(student_path));
  const std::string line =
      epoch_diagnostics_json(s, t, 0, lambda, {mc_n, mc_seed}, std::nullopt);
  std::cout << line << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "diagnostics.json", line + "\n");
  }
  return 0;
}

int run_certify(const std::string& teacher_path, const std::string& config_path, int ell,
                int k_max, int grid_n, int ambient, std::uint64_t seed,
                const std::string& out_dir) {
  Teacher t;
  if (!teacher_path.empty()) {
    t = teacher_from_json(read_file(teacher_path));
  } else if (!config_path.empty()) {
    t = sample_teacher(load_config(config_path).teacher);
  } else {
    throw ConfigError("certify: provide --teacher or --config");
  }
  Certificate cert = assemble_certificate(t, ell, k_max);
  const VerifyReport rep = verify_nondegeneracy(cert, t, grid_n, ambient, seed);
  ordered_json j;
  j["ell"] = cert.ell;
  j["k_max"] = cert.k_max;
  j["rho_fit"] = rep.rho_fit;
  j["interp_error"] = rep.interp_error;
  j["grad_error"] = rep.grad_error;
  j["max_abs_eta"] = rep.max_abs_eta;
  j["worst_point"] = vec_json(rep.worst_w);
  j["worst_margin"] = rep.worst_margin;
  j["p_norm_est"] = cert.p_norm_est;
  j["grid_points"] = rep.grid_points;
  const std::string text = j.dump(2);
  std::cout << text << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "certify_report.json", text + "\n");
  }
  return 0;
}

int run_mc_check(long n, std::uint64_t seed, int instances, Index d) {
  bool all_ok = true;
  CounterRng rng(seed);
  for (int inst = 0; inst < instances; ++inst) {
    const Vector w = rng.normal_vector(d);
    const Vector u = rng.normal_vector(d);
    const Vector wb = w.normalized(), ub = u.normalized();

    const auto kp = mc_expectation(
        [&](const Vector& x) { return std::max(w.dot(x), 0.0) * std::max(u.dot(x), 0.0); }, d, n,
        seed * 1000 + inst);
    const double kp_err = std::abs(kp.mean - relu_pair_kernel(w, u));

    const auto mm = mc_expectation([&](const Vector& x) { return std::max(w.dot(x), 0.0); }, d, n,
                                   seed * 1000 + 100 + inst);
    const double mm_err = std::abs(mm.mean - relu_low_order_moments(w).first);

    auto s2 = [](double z) { return std::max(z, 0.0) - 1.0 / std::sqrt(2.0 * M_PI) - 0.5 * z; };
    const auto sg = mc_expectation(
        [&](const Vector& x) { return s2(wb.dot(x)) * s2(ub.dot(x)); }, d, n,
        seed * 1000 + 200 + inst);
    const double sg_err = std::abs(sg.mean - sigma_ge2_kernel(wb, ub));

    const bool ok =
        kp_err <= 5 * kp.stderr_ && mm_err <= 5 * mm.stderr_ && sg_err <= 5 * sg.stderr_;
    all_ok = all_ok && ok;
    std::printf("instance %d: pair_kernel |err|=%.2e (5se=%.2e)  moments |err|=%.2e (5se=%.2e)  "
                "sigma_ge2 |err|=%.2e (5se=%.2e)  %s\n",
                inst, kp_err, 5 * kp.stderr_, mm_err, 5 * mm.stderr_, sg_err, 5 * sg.stderr_,
                ok ? "ok" : "FAIL");
  }
  if (!all_ok) throw NumericError("mc-check: a closed form disagreed with the MC oracle");
  std::cout << "all mc checks passed\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"teacher-student two-layer ReLU recovery experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, teacher_path, student_path;
  std::int64_t seed_flag = -1;
  double lambda = 0.0;
  long mc_n = 200000;
  std::uint64_t mc_seed = 1;
  long n = 1000000;
  std::uint64_t check_seed = 7;
  int instances = 5;
  long d = 8;
  int ell = -1, k_max = -1, grid_n = 720, ambient = 1000;
  std::uint64_t cert_seed = 1;

  CLI::App* gen = app.add_subcommand("gen-teacher", "sample a teacher and write teacher.json");
  gen->add_option("--config", config_path)->required();
  gen->add_option("--out", out_dir);
  gen->add_option("--seed", seed_flag);

  CLI::App* train = app.add_subcommand("train", "run the full pipeline from a config");
  train->add_option("--config", config_path)->required();
  train->add_option("--out", out_dir);
  train->add_option("--seed", seed_flag);

  CLI::App* diag = app.add_subcommand("diagnose", "geometry diagnostics for a checkpoint");
  diag->add_option("--teacher", teacher_path)->required();
  diag->add_option("--student", student_path)->required();
  diag->add_option("--lambda", lambda)->required();
  diag->add_option("--mc-n", mc_n);
  diag->add_option("--mc-seed", mc_seed);
  diag->add_option("--out", out_dir);

  CLI::App* cert = app.add_subcommand("certify", "dual-certificate suite for a teacher");
  cert->add_option("--teacher", teacher_path);
  cert->add_option("--config", config_path);
  cert->add_option("--ell", ell);
  cert->add_option("--kmax", k_max);
  cert->add_option("--grid-n", grid_n);
  cert->add_option("--ambient", ambient);
  cert->add_option("--seed", cert_seed);
  cert->add_option("--out", out_dir);

  CLI::App* check = app.add_subcommand("mc-check", "closed forms vs the Monte Carlo oracle");
  check->add_option("--n", n);
  check->add_option("--seed", check_seed);
  check->add_option("--instances", instances);
  check->add_option("--d", d);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::optional<std::uint64_t> seed_override;
  if (seed_flag >= 0) seed_override = static_cast<std::uint64_t>(seed_flag);
  try {
    if (gen->parsed()) return run_gen_teacher(config_path, out_dir, seed_override);
    if (train->parsed()) return run_train(config_path, out_dir, seed_override);
    if (diag->parsed()) return run_diagnose(teacher_path, student_path, lambda, mc_n, mc_seed,
                                            out_dir);
    if (cert->parsed()) return run_certify(teacher_path, config_path, ell, k_max, grid_n, ambient,
                                           cert_seed, out_dir);
    if (check->parsed()) return run_mc_check(n, check_seed, instances, d);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace relurec
