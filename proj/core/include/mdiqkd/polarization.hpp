#pragma once

#include <array>
#include <complex>
#include <cstdint>

#include <Eigen/Core>

#include "mdiqkd/rng.hpp"
#include "mdiqkd/types.hpp"

namespace mdiqkd {

using Complex = std::complex<double>;

enum class Bb84Label : std::uint8_t { H = 0, V = 1, D = 2, A = 3 };

// Bit convention: H=0, V=1, D=0, A=1.
constexpr Bb84Label bb84_label(Basis basis, int bit) {
  if (basis == Basis::Z) return bit == 0 ? Bb84Label::H : Bb84Label::V;
  return bit == 0 ? Bb84Label::D : Bb84Label::A;
}
constexpr Basis basis_of(Bb84Label l) {
  return (l == Bb84Label::H || l == Bb84Label::V) ? Basis::Z : Basis::X;
}
constexpr int bit_of(Bb84Label l) {
  return (l == Bb84Label::V || l == Bb84Label::A) ? 1 : 0;
}

std::optional<Bb84Label> parse_bb84_label(std::string_view s);

/// Normalized Jones vector. Observables are invariant under a global phase.
class PolarizationState {
 public:
  PolarizationState() : h_(1.0), v_(0.0) {}
  // Normalizes; throws InvalidInput for the zero vector.
  PolarizationState(Complex h, Complex v);

  Complex h() const { return h_; }
  Complex v() const { return v_; }
  Eigen::Vector2cd vec() const { return {h_, v_}; }

  // Stokes vector (S1, S2, S3) on the unit Poincare sphere.
  std::array<double, 3> stokes() const;

 private:
  Complex h_;
  Complex v_;
};

/// |<a|b>|^2
double fidelity(const PolarizationState& a, const PolarizationState& b);

/// Canonical BB84 states: H=(1,0), V=(0,1), D=(1,1)/sqrt2, A=(1,-1)/sqrt2.
PolarizationState bb84_state(Bb84Label label);
PolarizationState bb84_state(char label);  // 'H','V','D','A'

enum class Cardinal : std::uint8_t { H, V, D, A, R, L };
inline constexpr std::array<Cardinal, 6> kCardinals = {
    Cardinal::H, Cardinal::V, Cardinal::D, Cardinal::A, Cardinal::R, Cardinal::L};
PolarizationState cardinal_state(Cardinal c);

using StokesAxis = std::array<double, 3>;
inline constexpr StokesAxis kAxisS1 = {1.0, 0.0, 0.0};
inline constexpr StokesAxis kAxisS2 = {0.0, 1.0, 0.0};
inline constexpr StokesAxis kAxisS3 = {0.0, 0.0, 1.0};

/// 2x2 unitary acting on Jones vectors.
class ChannelUnitary {
 public:
  ChannelUnitary() : m_(Eigen::Matrix2cd::Identity()) {}
  // Throws InvalidInput unless U^dagger U = I within `tolerance`.
  explicit ChannelUnitary(const Eigen::Matrix2cd& m, double tolerance = 1e-10);

  static ChannelUnitary identity() { return {}; }

  // Rotation of the Poincare sphere by `stokes_angle` about unit `axis`:
  // U = cos(a/2) I - i sin(a/2) (n . sigma). A rotation about S3 by a maps
  // H to cos(a/2) H + sin(a/2) V.
  static ChannelUnitary rotation(const StokesAxis& axis, double stokes_angle);

  const Eigen::Matrix2cd& matrix() const { return m_; }
  PolarizationState apply(const PolarizationState& s) const;
  Complex element(const PolarizationState& out, const PolarizationState& in) const;

  // this * rhs: rhs acts first.
  ChannelUnitary operator*(const ChannelUnitary& rhs) const;

  // ||U^dagger U - I|| (Frobenius).
  double unitarity_error() const;

  // Projects back onto U(2) via polar decomposition; counters round-off drift
  // in long compositions.
  ChannelUnitary renormalized() const;

 private:
  struct Unchecked {};
  ChannelUnitary(const Eigen::Matrix2cd& m, Unchecked) : m_(m) {}
  Eigen::Matrix2cd m_;
};

struct MisalignmentAngles {
  double theta_z = 0.0;
  double theta_x = 0.0;
};

/// Cross-projection error rates e_Z = |<V|U|H>|^2 and e_X = |<A|U|D>|^2.
struct ErrorRates {
  double e_z = 0.0;
  double e_x = 0.0;
};
ErrorRates error_rates(const ChannelUnitary& u);

/// theta_b = arcsin(sqrt(e_b)), both in [0, pi/2].
MisalignmentAngles misalignment_angles(const ChannelUnitary& u);

/// Isotropic random-walk drift. Each step rotates about a uniformly random
/// Stokes axis; the rotation's polarization angle (half the sphere angle,
/// the same units as a misalignment angle) is |N(0, sigma)| with sigma set
/// so that its mean is rate * dt.
class DriftProcess {
 public:
  DriftProcess(double rate_rad_per_s, std::uint64_t seed,
               ChannelUnitary initial = ChannelUnitary::identity());

  // Advances by dt seconds (dt > 0) and returns the new channel.
  const ChannelUnitary& step(double dt);

  const ChannelUnitary& current() const { return current_; }
  double rate() const { return rate_; }
  double last_step_angle() const { return last_angle_; }
  std::uint64_t steps() const { return steps_; }

 private:
  double rate_;
  Rng rng_;
  ChannelUnitary current_;
  double last_angle_ = 0.0;
  std::uint64_t steps_ = 0;
};

/// Four fibre squeezers. Squeezer i is a linear retarder whose retardance
/// rotates the Poincare sphere about a fixed axis (alternating S1, S2).
class SqueezerBank {
 public:
  static constexpr std::size_t kCount = 4;
  static constexpr double kDefaultLimit = 2.0 * 3.14159265358979323846;

  SqueezerBank();
  SqueezerBank(std::array<StokesAxis, kCount> axes,
               std::array<double, kCount> limits);

  double retardance(std::size_t i) const { return retardance_.at(i); }
  double limit(std::size_t i) const { return limit_.at(i); }
  const StokesAxis& axis(std::size_t i) const { return axes_.at(i); }

  // Sets retardance, clamping to [-limit, limit]. Returns true when clamped.
  bool set_retardance(std::size_t i, double value);
  // Adds delta; returns true when the result saturated at the limit.
  bool adjust(std::size_t i, double delta);

 private:
  std::array<StokesAxis, kCount> axes_;
  std::array<double, kCount> limit_;
  std::array<double, kCount> retardance_{};
};

struct SqueezerTransform {
  ChannelUnitary unitary;
  bool clamped = false;  // some requested retardance exceeded its limit
};

/// R4 * R3 * R2 * R1 (squeezer 0 acts first). Out-of-range retardances are
/// clamped and flagged.
SqueezerTransform squeezer_unitary(const SqueezerBank& bank);
SqueezerTransform squeezer_unitary(const std::array<double, 4>& retardances,
                                   const SqueezerBank& geometry);

/// Haar-random element of U(2) up to global phase.
ChannelUnitary random_unitary(Rng& rng);

/// Random rotation by polarization angle `angle` about a uniform axis.
ChannelUnitary random_rotation(Rng& rng, double angle);

}  // namespace mdiqkd
