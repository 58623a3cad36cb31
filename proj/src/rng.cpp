#include "prosody/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "prosody/error.hpp"

namespace prosody {

double Rng::normal(double mean, double stddev) {
  const double u1 = uniform_open();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * radius * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore_state(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) fail("rng: malformed engine state string");
}

}  // namespace prosody
