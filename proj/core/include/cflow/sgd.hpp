#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "cflow/activation.hpp"
#include "cflow/network.hpp"
#include "cflow/random.hpp"

namespace cflow {

enum class TrainMode {
  SCM,         // second layer frozen
  BothLayers,
};

enum class EpochOrder { Sequential, Shuffled };

enum class TeacherInit {
  Gaussian,     // rows i.i.d. N(0, 1), T close to the identity
  Orthonormal,  // T exactly the identity
};

struct GaussianStreamSpec {};

/// Fixed training set of P * N samples, labels drawn (with noise) once.
struct FixedSetSpec {
  double P = 1.0;
  EpochOrder order = EpochOrder::Shuffled;
};

struct IdxFileSpec {
  std::string path;
  EpochOrder order = EpochOrder::Shuffled;
};

using InputSourceSpec = std::variant<GaussianStreamSpec, FixedSetSpec, IdxFileSpec>;

struct TrainConfig {
  std::int64_t N = 784;
  std::int64_t M = 4;
  std::int64_t K = 4;
  Activation activation = Activation::Erf;
  double eta_w = 0.2;
  double eta_v = 0.0;
  double sigma = 0.0;
  double kappa = 0.0;
  std::int64_t batch = 1;
  TrainMode mode = TrainMode::SCM;
  std::int64_t steps = 0;
  std::uint64_t seed = 0;
  InputSourceSpec input_source = GaussianStreamSpec{};
  /// First-layer init variance; <= 0 picks 1 for Erf and 1/sqrt(N) otherwise.
  double init_variance = 0.0;
  /// Teacher second-layer weights (all equal).
  double v_star = 1.0;
  /// Student second-layer init in BothLayers mode: N(0, v_init_std^2).
  /// In SCM mode the student's second layer equals v_star.
  double v_init_std = 1.0;
  TeacherInit teacher_init = TeacherInit::Gaussian;
};

/// Returns a copy with SCM's eta_v forced to 0; throws Config errors for
/// non-positive sizes, negative rates, batch < 1 or FixedSet P < 1.
TrainConfig validated(TrainConfig cfg);

double effective_init_variance(const TrainConfig& cfg);

struct Sample {
  Eigen::VectorXd x;
  double y = 0.0;
};

/// Stream of inputs for SGD. Gaussian and image sources yield inputs only
/// (labels come from the teacher plus fresh noise); a fixed set yields the
/// stored labelled samples.
class InputSource {
 public:
  static InputSource gaussian_stream(Eigen::Index input_dim, std::uint64_t seed);
  static InputSource fixed_set(std::vector<Sample> samples, EpochOrder order, std::uint64_t seed);
  /// Rows are used as inputs as given (see load_idx for standardisation).
  static InputSource images(RowMatrix rows, EpochOrder order, std::uint64_t seed);

  Eigen::Index input_dim() const noexcept { return input_dim_; }
  bool labelled() const noexcept { return kind_ == Kind::FixedSet; }
  bool is_fixed_set() const noexcept { return kind_ == Kind::FixedSet; }

  /// Writes the next input into out.x (resized if needed) and, for a fixed
  /// set, its label into out.y.
  void next(Sample& out);

  /// Stored samples of a fixed set (empty otherwise).
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  /// Image rows (empty otherwise).
  const RowMatrix& image_rows() const noexcept { return images_; }

 private:
  enum class Kind { Gaussian, FixedSet, Images };

  InputSource(Kind kind, Eigen::Index input_dim, std::uint64_t seed);
  std::size_t next_index(std::size_t count);

  Kind kind_;
  Eigen::Index input_dim_;
  GaussianSampler normal_;
  std::vector<Sample> samples_;
  RowMatrix images_;
  EpochOrder order_ = EpochOrder::Sequential;
  std::vector<std::size_t> permutation_;
  std::size_t cursor_ = 0;
};

/// P*N Gaussian inputs with labels teacher(x) + sigma * zeta, noise fixed.
std::vector<Sample> make_fixed_set(const NetworkParams& teacher, Activation act,
                                   std::int64_t count, double sigma, std::uint64_t seed);

/// One SGD step on a mini-batch (all gradients from the pre-step weights):
///   w_k <- w_k - (kappa/N) w_k - eta_w/(b sqrt N) sum_l v_k g'(lambda_k^l) D^l x^l
///   v_k <- v_k - eta_v/(b N) sum_l g(lambda_k^l) D^l        (BothLayers only)
/// with D^l = phi_student(x^l) - y^l. Requires batch.size() == cfg.batch.
NetworkParams sgd_step(const NetworkParams& student, std::span<const Sample> batch,
                       const TrainConfig& cfg);

struct SimRecord {
  std::int64_t step = 0;
  double alpha = 0.0;
  double eg = 0.0;
  std::optional<MacroState> macro;
  /// Fixed-set runs only: 0.5 * mean squared training residual and the
  /// running minimum of eg (early-stopping error).
  std::optional<double> train_loss;
  std::optional<double> eg_min;
};

struct SimRun {
  std::vector<SimRecord> records;
  NetworkParams student;
  NetworkParams teacher;
  bool aborted = false;
  std::string diagnostic;
};

struct RunOptions {
  std::int64_t record_stride = 1;
  bool record_macro = false;
  std::optional<NetworkParams> initial_student;
};

/// Teacher weights for a config: Gaussian or orthonormal rows, second layer
/// v_star; seeded from derive_seed(cfg.seed, 0).
NetworkParams make_teacher(const TrainConfig& cfg);

/// Student initialisation per cfg, seeded from derive_seed(cfg.seed, 1).
NetworkParams make_student(const TrainConfig& cfg);

/// Student at the noiseless specialised solution: rows 0..M-1 copy the
/// teacher, the K - M surplus rows are i.i.d. N(0, surplus_std^2). In SCM
/// mode every v_i = v_star; with both layers the surplus v_i start at 0.
NetworkParams make_specialised_student(const TrainConfig& cfg, const NetworkParams& teacher,
                                      double surplus_std);
/// Student at the denoising solution: unit i copies teacher unit i mod M and
/// v_i = v*_(i mod M) / (number of units copying that teacher unit).
NetworkParams make_denoising_student(const TrainConfig& cfg, const NetworkParams& teacher);
/// Input source for cfg.input_source. Fixed sets are drawn from the teacher
/// with derive_seed(cfg.seed, 3); streams use derive_seed(cfg.seed, 4).
InputSource make_source(const TrainConfig& cfg, const NetworkParams& teacher);

/// Runs cfg.steps SGD steps, recording eg (from the measured order
/// parameters) every record_stride steps and after the final step. Stops
/// early with aborted = true if the weights become non-finite.
SimRun run(const TrainConfig& cfg, const NetworkParams& teacher, InputSource& source,
           const RunOptions& options);

/// Mean of eg over the records in the last `fraction` of the run's alpha
/// range (at least one record).
double late_time_average(const std::vector<SimRecord>& records, double fraction = 0.05);

/// Two-layer linear network phi(x) = sum_m v_m w_m . x (no 1/sqrt(N)).
/// Predicted first-order change of u = v^T w after one SGD step:
///   eta (y - u.x) x^T (I ||v||^2 + w^T w).
Eigen::VectorXd balance_update(const Eigen::VectorXd& v, const RowMatrix& w, const Sample& sample,
                               double eta);

/// The exact SGD step of that linear network; returns the updated (v, w).
std::pair<Eigen::VectorXd, RowMatrix> balance_sgd_step(const Eigen::VectorXd& v,
                                                       const RowMatrix& w, const Sample& sample,
                                                       double eta);

}  // namespace cflow
