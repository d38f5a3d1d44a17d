// Total-loss assembly across ablation modes, Adam optimization of the
// Gaussian parameter buffers (opacity logits, colors, mean deltas), and the
// finite-difference gradient verification harness.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "airsplat/metrics.hpp"
#include "airsplat/rom.hpp"
#include "airsplat/scpa.hpp"

namespace airsplat {

enum class TrainMode {
  kBaseline,       // context reconstruction logged, parameters frozen
  kContextOnly,    // context-view self-reconstruction
  kContextTarget,  // target supervision at drift-predicted poses, uncorrected
  kScpaOnly,
  kRomOnly,        // context-target reconstruction + ROM terms
  kFull,           // SCPA + ROM
};

const char* mode_name(TrainMode mode);
std::optional<TrainMode> parse_mode(const std::string& name);
const std::vector<TrainMode>& all_modes();

struct TrainConfig {
  TrainMode mode = TrainMode::kFull;
  int steps = 2000;
  double learning_rate = 1e-2;
  // Per-buffer step scales: direct primitive optimization wants the opacity
  // logits moving at full speed while mean deltas creep (they are weakly
  // constrained by a handful of views and random-walk otherwise).
  double lr_mean_scale = 0.02;
  double lr_color_scale = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_geo = 0.1;
  double lambda_opa = 1.0;
  double lambda_s = 0.1;
  double lambda_decay = 5.0;
  double tau = 2.0;
  double eta = 1e-8;
  uint64_t seed = 0;
  int eval_interval = 500;
  Vec3 background{0, 0, 0};
  double z_near = 0.05;
  int debug_nan_at_step = -1;  // test hook for the NonFiniteLoss path

  void validate(const Scene& scene) const;
  ReconConfig recon() const;
  RomParams rom() const;
};

// Trainable parameters. alpha = sigmoid(logit) keeps opacity in (0,1);
// colors are clamped to [0,1] on use; mean = base_mean + delta.
struct ParamBuffers {
  std::vector<double> logit;       // n
  std::vector<double> color;       // 3n
  std::vector<double> mean_delta;  // 3n
  std::vector<double> base_mean;   // 3n
  std::vector<double> m_logit, v_logit, m_color, v_color, m_mean, v_mean;
  int adam_t = 0;

  static ParamBuffers init(const PrimitiveSoA& base);
  void apply(PrimitiveSoA& soa) const;
};

struct LossBreakdown {
  double total = 0;
  double rec = 0;       // photometric term (SCPA min or plain reconstruction)
  double rec_mse = 0;   // its MSE part
  double rec_perc = 0;  // its weighted perceptual part
  double geo = 0;       // unweighted L_geo
  double opa = 0;       // unweighted L_opa
  int branch_aligned = 0;
  int branch_initial = 0;
};

struct ParamGrads {
  std::vector<double> d_alpha;  // n
  std::vector<double> d_color;  // 3n
  std::vector<double> d_mean;   // 3n
};

struct FrozenStopGrads {
  bool has_rom = false;
  RomFrozen rom;
};

// Evaluates the mode's loss and, optionally, gradients w.r.t. (alpha, color,
// mean). digest, when non-null, accumulates the discrete decisions of the
// evaluation (contributor structure, branch choices, hinge/clamp states) for
// kink detection. frozen pins stop-gradient quantities; capture exports them.
LossBreakdown total_loss(const Scene& scene, const PrimitiveSoA& soa,
                         const DriftModel& drift, const TeacherNoise& teacher,
                         const TrainConfig& cfg, ParamGrads* grads = nullptr,
                         uint64_t* digest = nullptr,
                         const FrozenStopGrads* frozen = nullptr,
                         FrozenStopGrads* capture = nullptr);

struct StepRecord {
  int step = 0;
  LossBreakdown loss;
  double alpha_floater_mean = 0;
  double alpha_inlier_mean = 0;
};

struct EvalRecord {
  int step = 0;
  std::vector<MetricReport> per_target;
  double mean_psnr = 0;
  double mean_ssim = 0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;  // eval_interval checkpoints plus final
  std::string csv;                // per-step metrics, fixed columns
  std::vector<Image> final_renders;
  std::vector<std::vector<double>> final_ratings;  // per view, H*W gray
  PrimitiveSoA final_soa;
  EvalRecord final_eval;
};

TrainReport train(const Scene& scene, const DriftModel& drift,
                  const TeacherNoise& teacher, const TrainConfig& cfg);

// Renders every target view at its ground-truth pose and scores it.
EvalRecord evaluate_targets(const Scene& scene, const PrimitiveSoA& soa,
                            const TrainConfig& cfg, int step);

struct GradCheckTrial {
  char kind = 'a';  // 'a' alpha, 'c' color, 'm' mean
  int index = 0;
  double analytic = 0;
  double fd = 0;
  double rel_err = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  double median_rel_err = 0;
  int n_trials = 0;
  int resampled = 0;    // kink-adjacent or out-of-margin coordinates skipped
  int zero_pairs = 0;   // both analytic and FD below 1e-8
  std::vector<GradCheckTrial> trials;
};

// Central differences of the mode's loss against the analytic gradient at the
// scene's initial parameters. Stop-gradient quantities are held at the base
// point; coordinates whose +-h evaluations differ in any discrete decision
// are resampled.
GradCheckReport grad_check(const Scene& scene, const DriftModel& drift,
                           const TeacherNoise& teacher, const TrainConfig& cfg,
                           double h, int n_trials, uint64_t seed);

}  // namespace airsplat
