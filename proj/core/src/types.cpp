#include "mdiqkd/types.hpp"

namespace mdiqkd {

std::string_view to_string(Basis b) { return b == Basis::Z ? "Z" : "X"; }

std::string_view to_string(Intensity i) {
  switch (i) {
    case Intensity::Mu: return "mu";
    case Intensity::Nu: return "nu";
    case Intensity::Omega: return "omega";
  }
  return "?";
}

std::string_view to_string(User u) { return u == User::Alice ? "alice" : "bob"; }

std::optional<Basis> parse_basis(std::string_view s) {
  if (s == "Z" || s == "z") return Basis::Z;
  if (s == "X" || s == "x") return Basis::X;
  return std::nullopt;
}

std::optional<Intensity> parse_intensity(std::string_view s) {
  if (s == "mu") return Intensity::Mu;
  if (s == "nu") return Intensity::Nu;
  if (s == "omega") return Intensity::Omega;
  return std::nullopt;
}

std::optional<User> parse_user(std::string_view s) {
  if (s == "alice") return User::Alice;
  if (s == "bob") return User::Bob;
  return std::nullopt;
}

}  // namespace mdiqkd
