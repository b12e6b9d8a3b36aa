#pragma once

// Synthetic data: the two-mass nonlinear spring chain, random stable LTI
// systems, and central-difference state estimates.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "stabid/error.hpp"
#include "stabid/linalg.hpp"
#include "stabid/models.hpp"

namespace stabid {

/// Stiffening spring k tan(pi s / (2 limit)); the default limit 1.25 gives
/// k tan(pi s / 2.5).
inline double spring_force(double s, double k, double limit = 1.25) {
  if (!(std::abs(s) < limit)) throw OutOfRange("spring_force: |s| >= " + std::to_string(limit));
  return k * std::tan(std::numbers::pi * s / (2.0 * limit));
}

/// Potential energy of the spring at extension s.
inline double spring_energy(double s, double k, double limit = 1.25) {
  if (!(std::abs(s) < limit)) throw OutOfRange("spring_energy: |s| >= limit");
  const double a = std::numbers::pi / (2.0 * limit);
  return -k / a * std::log(std::cos(a * s));
}

/// wall - spring1 - m1 - spring2 - m2, force applied to m1.
struct MsdParams {
  double m1 = 0.5, m2 = 0.1;
  double c1 = 0.01, c2 = 0.1;
  double k1 = 2.0, k2 = 1.0;
  double limit = 1.25;
  double sample_time = 0.1;
  int samples = 1000;  ///< 100 s at 10 Hz
  double noise_var = 1e-4;
  double rk4_step = 0.01;
  bool paper_exact_divisor = false;  ///< velocity = (s_{t+1} - s_{t-1}) / T_s
  int max_reseeds = 50;
  std::array<double, 4> x0{0.0, 0.0, 0.0, 0.0};  ///< s1, s2, v1, v2
  bool noise = true;
};

/// Sum of sinusoids u(t) = sum_i a_i sin(2 pi f_i t + phi_i). The defaults give
/// an output SNR near 34 dB at noise variance 1e-4 (about 33 to 36 dB over seeds).
struct InputSpec {
  int n_sines = 20;
  double amp_min = 0.0, amp_max = 0.6;     ///< N
  double freq_min = 0.01, freq_max = 0.25;  ///< Hz
};

struct SineInput {
  std::vector<double> amp, freq, phase;
  double operator()(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < amp.size(); ++i)
      s += amp[i] * std::sin(2.0 * std::numbers::pi * freq[i] * t + phase[i]);
    return s;
  }
};

inline SineInput draw_input(const InputSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ua(spec.amp_min, spec.amp_max);
  std::uniform_real_distribution<double> uf(spec.freq_min, spec.freq_max);
  std::uniform_real_distribution<double> up(0.0, 2.0 * std::numbers::pi);
  SineInput s;
  for (int i = 0; i < spec.n_sines; ++i) {
    s.amp.push_back(ua(rng));
    s.freq.push_back(uf(rng));
    s.phase.push_back(up(rng));
  }
  return s;
}

/// x~_t = [s_t, ds_t] for displacement columns s: central differences inside,
/// one-sided at the ends. The divisor is 2 T_s, or T_s when paper_exact_divisor.
inline Mat central_diff_states(const Mat& s, double sample_time, bool paper_exact_divisor = false) {
  const Eigen::Index T = s.rows(), k = s.cols();
  if (T < 3) throw Error("central_diff_states: need T >= 3");
  if (!(sample_time > 0)) throw Error("central_diff_states: sample time must be positive");
  const double div = paper_exact_divisor ? sample_time : 2.0 * sample_time;
  Mat x(T, 2 * k);
  x.leftCols(k) = s;
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index t = 1; t + 1 < T; ++t) x(t, k + c) = (s(t + 1, c) - s(t - 1, c)) / div;
    x(0, k + c) = 2.0 * (s(1, c) - s(0, c)) / div;
    x(T - 1, k + c) = 2.0 * (s(T - 1, c) - s(T - 2, c)) / div;
  }
  return x;
}

/// x~_t = [s1, s2, ds1, ds2].
inline Mat central_diff_states(const Vec& s1, const Vec& s2, double sample_time,
                               bool paper_exact_divisor = false) {
  if (s2.size() != s1.size()) throw Error("central_diff_states: need equal lengths");
  Mat s(s1.size(), 2);
  s.col(0) = s1;
  s.col(1) = s2;
  return central_diff_states(s, sample_time, paper_exact_divisor);
}

struct MsdRun {
  Dataset data;        ///< u = force, y = noisy s2, x = central-difference states
  Mat clean;           ///< T x 4 true (s1, s2, v1, v2)
  Mat noisy;           ///< T x 2 noisy (s1, s2)
  double snr_db = 0.0;  ///< output SNR of y
  std::uint64_t seed_used = 0;
  int reseeds = 0;
};

namespace detail {

inline std::array<double, 4> msd_rhs(const MsdParams& p, const std::array<double, 4>& x, double f) {
  const double s1 = x[0], s2 = x[1], v1 = x[2], v2 = x[3];
  const double fs1 = spring_force(s1, p.k1, p.limit);
  const double fs2 = spring_force(s2 - s1, p.k2, p.limit);
  const double a1 = (-fs1 - p.c1 * v1 + fs2 + p.c2 * (v2 - v1) + f) / p.m1;
  const double a2 = (-fs2 - p.c2 * (v2 - v1)) / p.m2;
  return {v1, v2, a1, a2};
}

template <typename Force>
std::array<double, 4> rk4_step(const MsdParams& p, const std::array<double, 4>& x, double t, double h,
                               const Force& force) {
  auto add = [](const std::array<double, 4>& a, const std::array<double, 4>& b, double s) {
    return std::array<double, 4>{a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]};
  };
  const auto k1 = msd_rhs(p, x, force(t));
  const auto k2 = msd_rhs(p, add(x, k1, h / 2), force(t + h / 2));
  const auto k3 = msd_rhs(p, add(x, k2, h / 2), force(t + h / 2));
  const auto k4 = msd_rhs(p, add(x, k3, h), force(t + h));
  std::array<double, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = x[i] + h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

inline std::uint64_t mix_seed(std::uint64_t seed, int attempt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(attempt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Noise-free sampled trajectory T x 4 and the sampled input for a given force.
template <typename Force>
std::pair<Mat, Vec> integrate_msd(const MsdParams& p, const Force& force) {
  const int sub = static_cast<int>(std::lround(p.sample_time / p.rk4_step));
  if (sub < 1 || std::abs(sub * p.rk4_step - p.sample_time) > 1e-12 * p.sample_time)
    throw Error("integrate_msd: sample_time must be a multiple of rk4_step");
  if (!(p.m1 > 0 && p.m2 > 0)) throw Error("integrate_msd: masses must be positive");
  Mat traj(p.samples, 4);
  Vec u(p.samples);
  std::array<double, 4> x = p.x0;
  for (int k = 0; k < p.samples; ++k) {
    const double t = k * p.sample_time;
    for (int i = 0; i < 4; ++i) traj(k, i) = x[i];
    u(k) = force(t);
    if (std::abs(x[0]) >= p.limit || std::abs(x[1] - x[0]) >= p.limit)
      throw OutOfRange("integrate_msd: spring extension left the admissible range");
    if (k + 1 == p.samples) break;
    for (int j = 0; j < sub; ++j) x = detail::rk4_step(p, x, t + j * p.rk4_step, p.rk4_step, force);
    for (double v : x)
      if (!std::isfinite(v)) throw SimulationFailure("integrate_msd: non-finite state", k + 1);
  }
  return {traj, u};
}

/// Simulates the chain under a random multisine and attaches noisy
/// measurements and central-difference states. Out-of-range runs are redrawn
/// with a deterministic seed sequence.
inline MsdRun simulate_msd(const MsdParams& p, const InputSpec& inp, std::uint64_t seed) {
  for (int attempt = 0; attempt <= p.max_reseeds; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : detail::mix_seed(seed, attempt);
    std::mt19937_64 rng(s);
    const SineInput force = draw_input(inp, rng);
    std::pair<Mat, Vec> run;
    try {
      run = integrate_msd(p, force);
    } catch (const OutOfRange&) {
      continue;
    }
    MsdRun out;
    out.clean = run.first;
    out.seed_used = s;
    out.reseeds = attempt;
    std::normal_distribution<double> nd(0.0, std::sqrt(p.noise_var));
    out.noisy.resize(p.samples, 2);
    double sig = 0.0, noi = 0.0;
    for (int k = 0; k < p.samples; ++k)
      for (int c = 0; c < 2; ++c) {
        const double n = p.noise ? nd(rng) : 0.0;
        out.noisy(k, c) = out.clean(k, c) + n;
        if (c == 1) {
          sig += out.clean(k, c) * out.clean(k, c);
          noi += n * n;
        }
      }
    out.snr_db = noi > 0 ? 10.0 * std::log10(sig / noi) : std::numeric_limits<double>::infinity();
    out.data.u = run.second;
    out.data.y = out.noisy.col(1);
    out.data.sample_time = p.sample_time;
    if (p.samples >= 3)
      out.data.x = central_diff_states(out.noisy.col(0), out.noisy.col(1), p.sample_time, p.paper_exact_divisor);
    return out;
  }
  throw OutOfRange("simulate_msd: every reseed left the admissible spring range");
}

/// Total mechanical energy of a clean trajectory row (s1, s2, v1, v2).
inline double msd_energy(const MsdParams& p, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return 0.5 * p.m1 * x(2) * x(2) + 0.5 * p.m2 * x(3) * x(3) + spring_energy(x(0), p.k1, p.limit) +
         spring_energy(x(1) - x(0), p.k2, p.limit);
}

struct LtiSystem {
  Mat A, B, C, D;
  int n_x() const { return static_cast<int>(A.rows()); }
  int n_u() const { return static_cast<int>(B.cols()); }
  int n_y() const { return static_cast<int>(C.rows()); }
  /// Implicit form with E = I.
  LtiMatrices implicit() const { return LtiMatrices{Mat::Identity(n_x(), n_x()), A, B, C, D}; }
};

struct RandomLti {
  LtiSystem sys;
  double spectral_radius = 0.0;
  bool impulse_stable = false;
};

/// A ~ N(0,1) rescaled to a spectral radius drawn uniformly in [0.3, rho_bar];
/// B, C, D ~ N(0,1)/sqrt(n_x).
inline RandomLti gen_random_lti(int n_x, int n_u, int n_y, double rho_bar, std::uint64_t seed) {
  if (!(rho_bar > 0 && rho_bar < 1)) throw Error("gen_random_lti: need 0 < rho_bar < 1");
  if (n_x < 1 || n_u < 0 || n_y < 1) throw Error("gen_random_lti: bad dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ur(std::min(0.3, rho_bar), rho_bar);
  auto draw = [&](int r, int c, double scale) {
    Mat m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = scale * nd(rng);
    return m;
  };
  RandomLti out;
  Mat a;
  double sr = 0.0;
  for (int tries = 0; tries < 100 && !(sr > 1e-8); ++tries) {
    a = draw(n_x, n_x, 1.0);
    sr = spectral_radius(a);
  }
  if (!(sr > 1e-8)) throw Error("gen_random_lti: degenerate draw");
  const double target = ur(rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(n_x));
  out.sys.A = a * (target / sr);
  out.sys.B = draw(n_x, n_u, s);
  out.sys.C = draw(n_y, n_x, s);
  out.sys.D = draw(n_y, n_u, s);
  out.spectral_radius = spectral_radius(out.sys.A);
  out.impulse_stable = out.spectral_radius < 1.0;
  return out;
}

enum class StatePolicy { oracle, noisy_oracle };

struct LtiRun {
  Dataset data;
  Mat y_clean;
  Mat x_clean;
  double snr_db = 0.0;
};

/// White-noise input, additive output noise at the requested SNR (infinite =
/// noiseless), and true or noise-corrupted states.
inline LtiRun make_lti_dataset(const LtiSystem& sys, int T, double snr_db, StatePolicy policy,
                               std::uint64_t seed) {
  if (T < 2) throw Error("make_lti_dataset: need T >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int nx = sys.n_x(), nu = sys.n_u(), ny = sys.n_y();
  Mat u(T, nu);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < nu; ++j) u(t, j) = nd(rng);
  Mat x(T, nx), y(T, ny);
  Vec xt = Vec::Zero(nx);
  for (int t = 0; t < T; ++t) {
    x.row(t) = xt.transpose();
    const Vec ut = u.row(t).transpose();
    y.row(t) = (sys.C * xt + sys.D * ut).transpose();
    xt = sys.A * xt + sys.B * ut;
  }
  LtiRun out;
  out.x_clean = x;
  out.y_clean = y;
  const bool noisy = std::isfinite(snr_db);
  const double ratio = noisy ? std::pow(10.0, -snr_db / 10.0) : 0.0;
  Mat yn = y;
  double sig = 0.0, noi = 0.0;
  for (int c = 0; c < ny; ++c) {
    const double sd = std::sqrt(ratio * y.col(c).squaredNorm() / T);
    for (int t = 0; t < T; ++t) {
      const double n = noisy ? sd * nd(rng) : 0.0;
      yn(t, c) += n;
      noi += n * n;
    }
    sig += y.col(c).squaredNorm();
  }
  out.snr_db = noi > 0 ? 10.0 * std::log10(sig / noi) : std::numeric_limits<double>::infinity();
  Mat xs = x;
  if (policy == StatePolicy::noisy_oracle && noisy) {
    for (int c = 0; c < nx; ++c) {
      const double sd = std::sqrt(ratio * x.col(c).squaredNorm() / T);
      for (int t = 0; t < T; ++t) xs(t, c) += sd * nd(rng);
    }
  }
  out.data.u = u;
  out.data.y = yn;
  out.data.x = xs;
  out.data.sample_time = 1.0;
  return out;
}

}  // namespace stabid
