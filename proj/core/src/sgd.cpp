#include "cflow/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/random/uniform_int_distribution.hpp>

#include "cflow/error.hpp"
#include "cflow/gen_error.hpp"
#include "cflow/idx.hpp"

namespace cflow {

TrainConfig validated(TrainConfig cfg) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, msg); };
  if (cfg.N < 1 || cfg.M < 1 || cfg.K < 1) fail("N, M and K must be positive");
  if (cfg.eta_w < 0.0 || cfg.eta_v < 0.0) fail("learning rates must be non-negative");
  if (cfg.sigma < 0.0) fail("sigma must be non-negative");
  if (cfg.kappa < 0.0) fail("kappa must be non-negative");
  if (cfg.batch < 1) fail("batch must be at least 1");
  if (cfg.steps < 0) fail("steps must be non-negative");
  if (cfg.v_init_std < 0.0) fail("v_init_std must be non-negative");
  if (const auto* fixed = std::get_if<FixedSetSpec>(&cfg.input_source)) {
    if (!(fixed->P >= 1.0)) fail("fixed set needs P >= 1");
  }
  if (const auto* idx = std::get_if<IdxFileSpec>(&cfg.input_source)) {
    if (idx->path.empty()) fail("idx input source needs a path");
  }
  if (cfg.mode == TrainMode::SCM) cfg.eta_v = 0.0;
  return cfg;
}

double effective_init_variance(const TrainConfig& cfg) {
  if (cfg.init_variance > 0.0) return cfg.init_variance;
  if (cfg.activation == Activation::Erf) return 1.0;
  return 1.0 / std::sqrt(static_cast<double>(cfg.N));
}

// ---------------------------------------------------------------------------
// Input sources

InputSource::InputSource(Kind kind, Eigen::Index input_dim, std::uint64_t seed)
    : kind_(kind), input_dim_(input_dim), normal_(seed) {}

InputSource InputSource::gaussian_stream(Eigen::Index input_dim, std::uint64_t seed) {
  if (input_dim < 1) throw Error(ErrorCode::InvalidArgument, "input dimension must be positive");
  return InputSource(Kind::Gaussian, input_dim, seed);
}

InputSource InputSource::fixed_set(std::vector<Sample> samples, EpochOrder order,
                                   std::uint64_t seed) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "fixed set is empty");
  const Eigen::Index dim = samples.front().x.size();
  for (const Sample& s : samples) {
    if (s.x.size() != dim) throw Error(ErrorCode::DimensionMismatch, "fixed set rows differ in length");
    if (!s.x.allFinite() || !std::isfinite(s.y)) throw Error(ErrorCode::NonFinite, "non-finite sample");
  }
  InputSource src(Kind::FixedSet, dim, seed);
  src.samples_ = std::move(samples);
  src.order_ = order;
  return src;
}

InputSource InputSource::images(RowMatrix rows, EpochOrder order, std::uint64_t seed) {
  if (rows.rows() < 1 || rows.cols() < 1) throw Error(ErrorCode::InvalidArgument, "no images");
  InputSource src(Kind::Images, rows.cols(), seed);
  src.images_ = std::move(rows);
  src.order_ = order;
  return src;
}

std::size_t InputSource::next_index(std::size_t count) {
  if (cursor_ == 0 || permutation_.size() != count) {
    if (permutation_.size() != count) {
      permutation_.resize(count);
      cursor_ = 0;
    }
    std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
    if (order_ == EpochOrder::Shuffled) {
      // Fisher-Yates with the source's own engine, once per epoch
      for (std::size_t i = count; i > 1; --i) {
        boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(permutation_[i - 1], permutation_[pick(normal_.engine())]);
      }
    }
  }
  const std::size_t idx = permutation_[cursor_];
  cursor_ = (cursor_ + 1) % count;
  return idx;
}

void InputSource::next(Sample& out) {
  switch (kind_) {
    case Kind::Gaussian:
      out.x.resize(input_dim_);
      normal_.fill({out.x.data(), static_cast<std::size_t>(input_dim_)});
      return;
    case Kind::FixedSet: {
      const Sample& s = samples_[next_index(samples_.size())];
      out.x = s.x;
      out.y = s.y;
      return;
    }
    case Kind::Images:
      out.x = images_.row(static_cast<Eigen::Index>(next_index(static_cast<std::size_t>(images_.rows())))).transpose();
      return;
  }
}

std::vector<Sample> make_fixed_set(const NetworkParams& teacher, Activation act,
                                   std::int64_t count, double sigma, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "fixed set needs at least one sample");
  GaussianSampler normal(seed);
  std::vector<Sample> samples(static_cast<std::size_t>(count));
  const Eigen::Index n = teacher.input_dim();
  for (Sample& s : samples) {
    s.x.resize(n);
    normal.fill({s.x.data(), static_cast<std::size_t>(n)});
    s.y = forward(teacher, s.x, act) + sigma * normal();
  }
  return samples;
}

// ---------------------------------------------------------------------------
// SGD kernel

namespace {

struct Workspace {
  Eigen::VectorXd fields;
  Eigen::MatrixXd w_coeff;  // K x b
  Eigen::MatrixXd v_coeff;  // K x b
};

// Applies one (mini-)batch step in place; returns false if a residual is not finite.
bool apply_step(RowMatrix& w, Eigen::VectorXd& v, std::span<const Sample> batch,
                const TrainConfig& cfg, Workspace& ws) {
  const Eigen::Index k = w.rows();
  const Eigen::Index n = w.cols();
  const auto b = static_cast<Eigen::Index>(batch.size());
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double inv_sqrt_n = 1.0 / sqrt_n;  // same scaling as forward()
  const Activation act = cfg.activation;
  const bool both = cfg.mode == TrainMode::BothLayers;

  ws.w_coeff.resize(k, b);
  if (both) ws.v_coeff.resize(k, b);
  for (Eigen::Index l = 0; l < b; ++l) {
    ws.fields.noalias() = w * batch[l].x;
    ws.fields *= inv_sqrt_n;
    double phi = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) phi += v(i) * activate(act, ws.fields(i));
    const double delta = phi - batch[l].y;
    if (!std::isfinite(delta)) return false;
    for (Eigen::Index i = 0; i < k; ++i) {
      ws.w_coeff(i, l) = v(i) * activate_prime(act, ws.fields(i)) * delta;
      if (both) ws.v_coeff(i, l) = activate(act, ws.fields(i)) * delta;
    }
  }

  if (cfg.kappa > 0.0) w *= (1.0 - cfg.kappa / static_cast<double>(n));
  const double w_rate = cfg.eta_w / (static_cast<double>(b) * sqrt_n);
  for (Eigen::Index l = 0; l < b; ++l) {
    w.noalias() -= (w_rate * ws.w_coeff.col(l)) * batch[l].x.transpose();
  }
  if (both) {
    const double v_rate = cfg.eta_v / (static_cast<double>(b) * static_cast<double>(n));
    v.noalias() -= v_rate * ws.v_coeff.rowwise().sum();
  }
  return true;
}

double teacher_output(const NetworkParams& teacher, const Eigen::VectorXd& x, Activation act,
                      Eigen::VectorXd& fields) {
  fields.noalias() = teacher.first_layer() * x;
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.size()));
  double out = 0.0;
  for (Eigen::Index m = 0; m < fields.size(); ++m) {
    out += teacher.second_layer()(m) * activate(act, fields(m) * scale);
  }
  return out;
}

}  // namespace

NetworkParams sgd_step(const NetworkParams& student, std::span<const Sample> batch,
                       const TrainConfig& cfg) {
  if (static_cast<std::int64_t>(batch.size()) != cfg.batch) {
    throw Error(ErrorCode::DimensionMismatch, "batch has " + std::to_string(batch.size()) +
                                                  " samples, configuration says " +
                                                  std::to_string(cfg.batch));
  }
  for (const Sample& s : batch) {
    if (s.x.size() != student.input_dim()) {
      throw Error(ErrorCode::DimensionMismatch, "sample length differs from input dimension");
    }
  }
  RowMatrix w = student.first_layer();
  Eigen::VectorXd v = student.second_layer();
  Workspace ws;
  if (!apply_step(w, v, batch, cfg, ws)) {
    throw Error(ErrorCode::NonFinite, "non-finite residual in SGD step");
  }
  return NetworkParams(std::move(w), std::move(v));
}

// ---------------------------------------------------------------------------
// Runs

NetworkParams make_teacher(const TrainConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.seed, 0);
  if (cfg.teacher_init == TeacherInit::Orthonormal) {
    return orthonormal_teacher(cfg.M, cfg.N, cfg.v_star, seed);
  }
  return random_network(cfg.M, cfg.N, 1.0, cfg.v_star, seed);
}

NetworkParams make_student(const TrainConfig& cfg) {
  const std::uint64_t seed = derive_seed(cfg.seed, 1);
  NetworkParams base = random_network(cfg.K, cfg.N, effective_init_variance(cfg), cfg.v_star, seed);
  if (cfg.mode == TrainMode::SCM) return base;
  GaussianSampler normal(derive_seed(cfg.seed, 5));
  Eigen::VectorXd v(cfg.K);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cfg.v_init_std * normal();
  return NetworkParams(base.first_layer(), std::move(v));
}

NetworkParams make_specialised_student(const TrainConfig& cfg, const NetworkParams& teacher,
                                      double surplus_std) {
  if (teacher.input_dim() != cfg.N || teacher.hidden_units() != cfg.M) {
    throw Error(ErrorCode::DimensionMismatch, "teacher shape does not match (M, N)");
  }
  if (cfg.K < cfg.M) throw Error(ErrorCode::InvalidArgument, "specialised start needs K >= M");
  RowMatrix w(cfg.K, cfg.N);
  w.topRows(cfg.M) = teacher.first_layer();
  GaussianSampler normal(derive_seed(cfg.seed, 1));
  for (Eigen::Index i = cfg.M; i < cfg.K; ++i) {
    for (Eigen::Index j = 0; j < cfg.N; ++j) w(i, j) = surplus_std * normal();
  }
  Eigen::VectorXd v = Eigen::VectorXd::Constant(cfg.K, cfg.v_star);
  if (cfg.mode == TrainMode::BothLayers) {
    v.head(cfg.M) = teacher.second_layer();
    v.tail(cfg.K - cfg.M).setZero();
  }
  return NetworkParams(std::move(w), std::move(v));
}

NetworkParams make_denoising_student(const TrainConfig& cfg, const NetworkParams& teacher) {
  if (teacher.input_dim() != cfg.N || teacher.hidden_units() != cfg.M) {
    throw Error(ErrorCode::DimensionMismatch, "teacher shape does not match (M, N)");
  }
  if (cfg.K < cfg.M) throw Error(ErrorCode::InvalidArgument, "denoising start needs K >= M");
  RowMatrix w(cfg.K, cfg.N);
  Eigen::VectorXd v(cfg.K);
  for (Eigen::Index i = 0; i < cfg.K; ++i) {
    const Eigen::Index n = i % cfg.M;
    const Eigen::Index group = (cfg.K - n + cfg.M - 1) / cfg.M;  // units with i mod M == n
    w.row(i) = teacher.first_layer().row(n);
    v(i) = teacher.second_layer()(n) / static_cast<double>(group);
  }
  return NetworkParams(std::move(w), std::move(v));
}

InputSource make_source(const TrainConfig& cfg, const NetworkParams& teacher) {
  const std::uint64_t stream_seed = derive_seed(cfg.seed, 4);
  if (const auto* fixed = std::get_if<FixedSetSpec>(&cfg.input_source)) {
    const auto count = static_cast<std::int64_t>(std::llround(fixed->P * static_cast<double>(cfg.N)));
    return InputSource::fixed_set(
        make_fixed_set(teacher, cfg.activation, count, cfg.sigma, derive_seed(cfg.seed, 3)),
        fixed->order, stream_seed);
  }
  if (const auto* idx = std::get_if<IdxFileSpec>(&cfg.input_source)) {
    return load_idx(idx->path, cfg.N, idx->order, stream_seed);
  }
  return InputSource::gaussian_stream(cfg.N, stream_seed);
}

namespace {

double training_loss(const NetworkParams& student, const std::vector<Sample>& samples,
                     Activation act) {
  double total = 0.0;
  for (const Sample& s : samples) {
    const double r = forward(student, s.x, act) - s.y;
    total += 0.5 * r * r;
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

SimRun run(const TrainConfig& raw_cfg, const NetworkParams& teacher, InputSource& source,
           const RunOptions& options) {
  const TrainConfig cfg = validated(raw_cfg);
  if (teacher.input_dim() != cfg.N || teacher.hidden_units() != cfg.M) {
    throw Error(ErrorCode::DimensionMismatch, "teacher shape does not match (M, N)");
  }
  if (source.input_dim() != cfg.N) {
    throw Error(ErrorCode::DimensionMismatch, "input source dimension does not match N");
  }
  if (options.record_stride < 1) throw Error(ErrorCode::InvalidArgument, "record_stride must be >= 1");

  NetworkParams init = options.initial_student ? *options.initial_student : make_student(cfg);
  if (init.input_dim() != cfg.N || init.hidden_units() != cfg.K) {
    throw Error(ErrorCode::DimensionMismatch, "initial student shape does not match (K, N)");
  }
  RowMatrix w = init.first_layer();
  Eigen::VectorXd v = init.second_layer();

  GaussianSampler noise(derive_seed(cfg.seed, 2));
  std::vector<Sample> batch(static_cast<std::size_t>(cfg.batch));
  for (Sample& s : batch) s.x.resize(cfg.N);
  Eigen::VectorXd teacher_fields(cfg.M);
  Workspace ws;

  SimRun out{{}, init, teacher, false, {}};
  double eg_min = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(cfg.N);

  auto record = [&](std::int64_t step) {
    SimRecord rec;
    rec.step = step;
    rec.alpha = static_cast<double>(step * cfg.batch) / n;
    if (!w.allFinite() || !v.allFinite()) {
      rec.eg = std::numeric_limits<double>::quiet_NaN();
      out.records.push_back(std::move(rec));
      out.aborted = true;
      out.diagnostic = "non-finite weights at step " + std::to_string(step);
      return false;
    }
    NetworkParams student(w, v);
    MacroState macro = measure_macro(student, teacher);
    rec.eg = gen_error_unchecked(macro, cfg.activation);
    if (source.is_fixed_set()) {
      rec.train_loss = training_loss(student, source.samples(), cfg.activation);
      eg_min = std::min(eg_min, rec.eg);
      rec.eg_min = eg_min;
    }
    if (options.record_macro) rec.macro = std::move(macro);
    out.records.push_back(std::move(rec));
    return true;
  };

  if (!record(0)) return out;
  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    for (Sample& s : batch) {
      source.next(s);
      if (!source.labelled()) {
        s.y = teacher_output(teacher, s.x, cfg.activation, teacher_fields) + cfg.sigma * noise();
      }
    }
    if (!apply_step(w, v, batch, cfg, ws)) {
      out.aborted = true;
      out.diagnostic = "non-finite residual at step " + std::to_string(step);
      SimRecord rec;
      rec.step = step;
      rec.alpha = static_cast<double>(step * cfg.batch) / n;
      rec.eg = std::numeric_limits<double>::quiet_NaN();
      out.records.push_back(std::move(rec));
      return out;
    }
    if (step % options.record_stride == 0 || step == cfg.steps) {
      if (!record(step)) return out;
    }
  }
  out.student = NetworkParams(std::move(w), std::move(v));
  return out;
}

double late_time_average(const std::vector<SimRecord>& records, double fraction) {
  if (records.empty()) throw Error(ErrorCode::InvalidArgument, "no records to average");
  const double end = records.back().alpha;
  const double start = records.front().alpha;
  const double cut = end - fraction * (end - start);
  double total = 0.0;
  std::size_t count = 0;
  for (const SimRecord& r : records) {
    if (r.alpha >= cut) {
      total += r.eg;
      ++count;
    }
  }
  if (count == 0) return records.back().eg;
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Weight balance in two-layer linear networks

Eigen::VectorXd balance_update(const Eigen::VectorXd& v, const RowMatrix& w, const Sample& sample,
                               double eta) {
  if (w.rows() != v.size() || w.cols() != sample.x.size()) {
    throw Error(ErrorCode::DimensionMismatch, "balance_update shapes disagree");
  }
  const Eigen::VectorXd u = w.transpose() * v;
  const double error = sample.y - u.dot(sample.x);
  return eta * error * (v.squaredNorm() * sample.x + w.transpose() * (w * sample.x));
}

std::pair<Eigen::VectorXd, RowMatrix> balance_sgd_step(const Eigen::VectorXd& v,
                                                       const RowMatrix& w, const Sample& sample,
                                                       double eta) {
  if (w.rows() != v.size() || w.cols() != sample.x.size()) {
    throw Error(ErrorCode::DimensionMismatch, "balance_sgd_step shapes disagree");
  }
  const Eigen::VectorXd hidden = w * sample.x;
  const double error = sample.y - v.dot(hidden);
  Eigen::VectorXd v_new = v + eta * error * hidden;
  RowMatrix w_new = w + eta * error * v * sample.x.transpose();
  return {std::move(v_new), std::move(w_new)};
}

}  // namespace cflow
