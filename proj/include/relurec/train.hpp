#pragma once

#include <cstdint>
#include <vector>

#include "relurec/network.hpp"
#include "relurec/objective.hpp"
#include "relurec/types.hpp"

namespace relurec {

// Three-stage training: one full gradient step, a convex norm adjustment with
// an l1-type penalty, then multi-epoch gradient descent under halving weight
// decay.

struct Schedule {
  double eta0 = 1.0;       // Stage-1 step
  double lambda0 = 1.0;    // Stage-1 weight decay
  double eps0 = 0.3;       // target Stage-2 gap scale
  double lambda_stage2 = -1.0;  // < 0 means 0.11 sqrt(eps0); see stage2_lambda()
  double eta2 = 0.5;       // Stage-2 step (backtracking halves it as needed)
  int t2_max = 2000;
  double stage2_tol = 1e-12;
  double lambda30 = -1.0;  // < 0 means lambda_stage2 / 2; epoch k runs at lambda30 / 2^k
  int epochs = 14;         // K halvings
  double eta3 = -1.0;      // < 0 means 0.05 / (1 + d/32)
  int per_epoch_cap = 150000;
  double stop_factor = 1.0;  // epoch stops once max(gap, 0) <= stop_factor * lambda_k^2

  // Deviations from the sqrt(eps0) scaling are deliberate desk-scale fits:
  // the raw sqrt(eps0) sits above the lasso kill threshold of weak teacher
  // neurons (all second-layer mass proxes to zero), and the first epoch must
  // start with a positive gap surrogate so every epoch does real work.
  double stage2_lambda() const {
    return lambda_stage2 >= 0.0 ? lambda_stage2 : 0.11 * std::sqrt(eps0);
  }
  double stage3_lambda0() const { return lambda30 >= 0.0 ? lambda30 : 0.5 * stage2_lambda(); }
  double stage3_eta(Index d) const {
    return eta3 >= 0.0 ? eta3 : 0.05 / (1.0 + static_cast<double>(d) / 32.0);
  }
  void validate() const;
};

struct TraceRow {
  int stage = 0;   // 1, 2 or 3
  int epoch = 0;   // 0 outside stage 3
  long iter = 0;   // iteration within the stage/epoch
  double lambda = 0.0;
  double reg_loss = 0.0;
  double square_loss = 0.0;
  double gap_surrogate = 0.0;
  double grad_fro_norm = 0.0;
  double max_balance_violation = 0.0;  // max_i (|a_i| - |w_i|) / max(1, |w_i|)
  double wall_time_s = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
};

// Writes the trace as CSV (full-precision scientific notation, header row).
void trace_to_csv(const TrainTrace& trace, std::ostream& os);

// theta^1 = theta^0 - eta0 grad L_{lambda0}(theta^0). With symmetric
// initialization and preprocessed data, alpha and beta stay at zero.
Student stage1_one_step(const Student& student, const Teacher& teacher, double eta0,
                        double lambda0);

// Proximal gradient on a with (alpha, beta) refit to (alpha_hat, beta_hat)
// each iterate; soft-thresholds coordinate i at eta2 * lambda * |w_i|.
// The objective never increases between accepted iterates.
Student stage2_fit(const Student& student, const Teacher& teacher, double lambda, double eta2,
                   int t2_max, double tol, TrainTrace* trace = nullptr);

// a_i <- sign(a_i) sqrt(|a_i||w_i|), w_i <- wbar_i sqrt(|a_i||w_i|); the
// products a_i |w_i| and the k>=2 part of f are unchanged; (alpha, beta) are
// refit afterwards.
Student balance_norms(const Student& student);

// Gradient descent at fixed lambda_k until max(gap, 0) <= c_stop lambda_k^2
// or the iteration cap. The balance check |a_i| <= |w_i| is evaluated on
// every logged row.
Student stage3_epoch(const Student& student, const Teacher& teacher, double lambda_k, double eta3,
                     int cap, double c_stop, int epoch_index, int log_every, TrainTrace& trace);

struct PipelineResult {
  Student student;
  TrainTrace trace;
  std::vector<Student> epoch_checkpoints;  // state after each Stage-3 epoch
  std::vector<double> epoch_lambdas;
};

// init -> stage 1 -> stage 2 -> balance -> K epochs of stage 3 with
// lambda_k = lambda30 / 2^k (k = 1..K; stage 2 itself runs at lambda30).
PipelineResult run_pipeline(const Teacher& teacher, const Schedule& schedule, Index m,
                            std::uint64_t seed, int log_every = 1);

}  // namespace relurec
