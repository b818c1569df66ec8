#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mdiqkd {

enum class Basis : std::uint8_t { Z = 0, X = 1 };
enum class Intensity : std::uint8_t { Mu = 0, Nu = 1, Omega = 2 };
enum class User : std::uint8_t { Alice = 0, Bob = 1 };

inline constexpr std::array<Basis, 2> kBases = {Basis::Z, Basis::X};
inline constexpr std::array<Intensity, 3> kIntensities = {
    Intensity::Mu, Intensity::Nu, Intensity::Omega};
inline constexpr std::array<User, 2> kUsers = {User::Alice, User::Bob};

constexpr Basis other(Basis b) { return b == Basis::Z ? Basis::X : Basis::Z; }
constexpr User other(User u) {
  return u == User::Alice ? User::Bob : User::Alice;
}
constexpr std::size_t index(Basis b) { return static_cast<std::size_t>(b); }
constexpr std::size_t index(Intensity i) { return static_cast<std::size_t>(i); }
constexpr std::size_t index(User u) { return static_cast<std::size_t>(u); }

// Thrown for inputs that violate an operation's preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string_view to_string(Basis b);
std::string_view to_string(Intensity i);
std::string_view to_string(User u);

std::optional<Basis> parse_basis(std::string_view s);
std::optional<Intensity> parse_intensity(std::string_view s);
std::optional<User> parse_user(std::string_view s);

}  // namespace mdiqkd
