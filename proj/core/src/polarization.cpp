#include "mdiqkd/polarization.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace mdiqkd {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
const Complex kI{0.0, 1.0};

Eigen::Matrix2cd pauli_dot(const StokesAxis& n) {
  // S1 <-> diag(1,-1), S2 <-> sigma_x, S3 <-> sigma_y
  Eigen::Matrix2cd m;
  m << Complex(n[0], 0.0), Complex(n[1], -n[2]),
       Complex(n[1], n[2]), Complex(-n[0], 0.0);
  return m;
}

StokesAxis normalized(const StokesAxis& a) {
  const double norm = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  if (!(norm > 0.0)) throw InvalidInput("rotation axis must be nonzero");
  return {a[0] / norm, a[1] / norm, a[2] / norm};
}

}  // namespace

std::optional<Bb84Label> parse_bb84_label(std::string_view s) {
  if (s == "H") return Bb84Label::H;
  if (s == "V") return Bb84Label::V;
  if (s == "D") return Bb84Label::D;
  if (s == "A") return Bb84Label::A;
  return std::nullopt;
}

PolarizationState::PolarizationState(Complex h, Complex v) {
  const double n = std::sqrt(std::norm(h) + std::norm(v));
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InvalidInput("polarization state must have nonzero finite norm");
  }
  h_ = h / n;
  v_ = v / n;
}

std::array<double, 3> PolarizationState::stokes() const {
  const Complex hv = std::conj(h_) * v_;
  return {std::norm(h_) - std::norm(v_), 2.0 * hv.real(), 2.0 * hv.imag()};
}

double fidelity(const PolarizationState& a, const PolarizationState& b) {
  return std::norm(std::conj(a.h()) * b.h() + std::conj(a.v()) * b.v());
}

PolarizationState bb84_state(Bb84Label label) {
  switch (label) {
    case Bb84Label::H: return {1.0, 0.0};
    case Bb84Label::V: return {0.0, 1.0};
    case Bb84Label::D: return {kInvSqrt2, kInvSqrt2};
    case Bb84Label::A: return {kInvSqrt2, -kInvSqrt2};
  }
  throw InvalidInput("unknown BB84 label");
}

PolarizationState bb84_state(char label) {
  const auto parsed = parse_bb84_label(std::string_view(&label, 1));
  if (!parsed) {
    throw InvalidInput(std::string("invalid BB84 label '") + label + "'");
  }
  return bb84_state(*parsed);
}

PolarizationState cardinal_state(Cardinal c) {
  switch (c) {
    case Cardinal::H: return bb84_state(Bb84Label::H);
    case Cardinal::V: return bb84_state(Bb84Label::V);
    case Cardinal::D: return bb84_state(Bb84Label::D);
    case Cardinal::A: return bb84_state(Bb84Label::A);
    case Cardinal::R: return {kInvSqrt2, kI * kInvSqrt2};
    case Cardinal::L: return {kInvSqrt2, -kI * kInvSqrt2};
  }
  throw InvalidInput("unknown cardinal state");
}

ChannelUnitary::ChannelUnitary(const Eigen::Matrix2cd& m, double tolerance)
    : m_(m) {
  if (!m.allFinite() || unitarity_error() > tolerance) {
    throw InvalidInput("matrix is not unitary");
  }
}

ChannelUnitary ChannelUnitary::rotation(const StokesAxis& axis,
                                        double stokes_angle) {
  const StokesAxis n = normalized(axis);
  const double c = std::cos(0.5 * stokes_angle);
  const double s = std::sin(0.5 * stokes_angle);
  Eigen::Matrix2cd m = c * Eigen::Matrix2cd::Identity() - kI * s * pauli_dot(n);
  return {m, Unchecked{}};
}

PolarizationState ChannelUnitary::apply(const PolarizationState& s) const {
  const Eigen::Vector2cd out = m_ * s.vec();
  return {out(0), out(1)};
}

Complex ChannelUnitary::element(const PolarizationState& out,
                                const PolarizationState& in) const {
  return out.vec().adjoint() * m_ * in.vec();
}

ChannelUnitary ChannelUnitary::operator*(const ChannelUnitary& rhs) const {
  return {m_ * rhs.m_, Unchecked{}};
}

double ChannelUnitary::unitarity_error() const {
  return (m_.adjoint() * m_ - Eigen::Matrix2cd::Identity()).norm();
}

ChannelUnitary ChannelUnitary::renormalized() const {
  Eigen::JacobiSVD<Eigen::Matrix2cd> svd(m_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {svd.matrixU() * svd.matrixV().adjoint(), Unchecked{}};
}

ErrorRates error_rates(const ChannelUnitary& u) {
  static const PolarizationState h = bb84_state(Bb84Label::H);
  static const PolarizationState v = bb84_state(Bb84Label::V);
  static const PolarizationState d = bb84_state(Bb84Label::D);
  static const PolarizationState a = bb84_state(Bb84Label::A);
  return {std::norm(u.element(v, h)), std::norm(u.element(a, d))};
}

MisalignmentAngles misalignment_angles(const ChannelUnitary& u) {
  if (u.unitarity_error() > 1e-8) {
    throw InvalidInput("misalignment_angles requires a unitary channel");
  }
  const ErrorRates e = error_rates(u);
  auto angle = [](double p) { return std::asin(std::sqrt(std::clamp(p, 0.0, 1.0))); };
  return {angle(e.e_z), angle(e.e_x)};
}

DriftProcess::DriftProcess(double rate_rad_per_s, std::uint64_t seed,
                           ChannelUnitary initial)
    : rate_(rate_rad_per_s), rng_(seed), current_(std::move(initial)) {
  if (!(rate_ >= 0.0) || !std::isfinite(rate_)) {
    throw InvalidInput("drift rate must be finite and nonnegative");
  }
}

const ChannelUnitary& DriftProcess::step(double dt) {
  if (!(dt > 0.0)) throw InvalidInput("drift step requires dt > 0");
  ++steps_;
  if (rate_ == 0.0) {
    last_angle_ = 0.0;
    return current_;
  }
  // E|N(0, sigma)| = sigma * sqrt(2/pi)
  const double sigma = rate_ * dt * std::sqrt(std::numbers::pi / 2.0);
  std::normal_distribution<double> normal(0.0, sigma);
  last_angle_ = std::abs(normal(rng_));
  current_ = random_rotation(rng_, last_angle_) * current_;
  if (steps_ % 1024 == 0) current_ = current_.renormalized();
  return current_;
}

SqueezerBank::SqueezerBank()
    : SqueezerBank({kAxisS1, kAxisS2, kAxisS1, kAxisS2},
                   {kDefaultLimit, kDefaultLimit, kDefaultLimit, kDefaultLimit}) {}

SqueezerBank::SqueezerBank(std::array<StokesAxis, kCount> axes,
                           std::array<double, kCount> limits)
    : axes_(axes), limit_(limits) {
  for (auto& a : axes_) a = normalized(a);
  for (double l : limit_) {
    if (!(l > 0.0)) throw InvalidInput("squeezer limit must be positive");
  }
}

bool SqueezerBank::set_retardance(std::size_t i, double value) {
  const double lim = limit_.at(i);
  const double clamped = std::clamp(value, -lim, lim);
  retardance_.at(i) = clamped;
  return clamped != value;
}

bool SqueezerBank::adjust(std::size_t i, double delta) {
  return set_retardance(i, retardance_.at(i) + delta);
}

SqueezerTransform squeezer_unitary(const std::array<double, 4>& retardances,
                                   const SqueezerBank& geometry) {
  SqueezerTransform out;
  for (std::size_t i = 0; i < SqueezerBank::kCount; ++i) {
    const double lim = geometry.limit(i);
    const double r = std::clamp(retardances[i], -lim, lim);
    out.clamped = out.clamped || r != retardances[i];
    out.unitary = ChannelUnitary::rotation(geometry.axis(i), r) * out.unitary;
  }
  return out;
}

SqueezerTransform squeezer_unitary(const SqueezerBank& bank) {
  std::array<double, 4> r{};
  for (std::size_t i = 0; i < SqueezerBank::kCount; ++i) r[i] = bank.retardance(i);
  return squeezer_unitary(r, bank);
}

ChannelUnitary random_rotation(Rng& rng, double angle) {
  std::normal_distribution<double> normal(0.0, 1.0);
  StokesAxis axis{};
  double norm = 0.0;
  do {
    axis = {normal(rng), normal(rng), normal(rng)};
    norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  } while (norm < 1e-12);
  return ChannelUnitary::rotation(axis, 2.0 * angle);
}

ChannelUnitary random_unitary(Rng& rng) {
  // Uniform unit quaternion == Haar measure on SU(2).
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<double, 4> q{};
  double n = 0.0;
  do {
    for (double& x : q) x = normal(rng);
    n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  } while (n < 1e-12);
  for (double& x : q) x /= n;
  Eigen::Matrix2cd m;
  m << Complex(q[0], q[1]), Complex(q[2], q[3]),
       Complex(-q[2], q[3]), Complex(q[0], -q[1]);
  return ChannelUnitary(m);
}

}  // namespace mdiqkd
