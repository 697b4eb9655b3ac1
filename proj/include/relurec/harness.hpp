#pragma once

#include <optional>
#include <string>

#include "relurec/certificate.hpp"
#include "relurec/geometry.hpp"
#include "relurec/network.hpp"
#include "relurec/train.hpp"

namespace relurec {

// Experiment orchestration: JSON config in, artifact files out. All
// randomness flows from the seeds in the config; reruns are byte-identical
// except for the wall-time column of trace.csv.

struct ExperimentConfig {
  int schema_version = 1;
  TeacherOptions teacher;
  Index student_m = 64;
  std::uint64_t student_seed = 0;
  Schedule schedule;
  int log_every = 10;        // trace cadence within stage-3 epochs
  long mc_n = 200000;        // residual-norm Monte Carlo samples
  std::uint64_t mc_seed = 1;
  bool certify = false;
  std::string out_dir = "out";

  void validate() const;
};

// Strict parser: versioned schema, unknown keys rejected with the offending
// field in the message.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

struct ExperimentResult {
  Teacher teacher;
  PipelineResult pipeline;
  std::optional<Certificate> certificate;
  std::string out_dir;
};

// Produces teacher.json, student_final.json, checkpoint_epoch_*.json,
// trace.csv, diagnostics.jsonl, summary.json and plotdata/*.csv under
// config.out_dir. Stage errors are recorded in summary.json and rethrown.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Per-epoch diagnostics record (one JSON object per line in diagnostics.jsonl).
std::string epoch_diagnostics_json(const Student& student, const Teacher& teacher, int epoch,
                                   double lambda, const McSettings& mc,
                                   const std::optional<double>& p_norm_est);

// Suggested audit angles: delta_close = min(0.3, gap^{1/3}),
// delta_sign = min(pi/4, scale * lambda / sqrt(max(gap, lambda^2))).
std::pair<double, double> default_audit_deltas(double gap, double lambda, double scale = 0.5);

// CLI entry point shared by the binary and the tests. Subcommands:
// gen-teacher, train, diagnose, certify, mc-check. Returns 0 on success,
// 2 on validation errors, 3 on numeric failures.
int cli_main(int argc, const char* const* argv);

}  // namespace relurec
