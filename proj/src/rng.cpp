#include "qtw/rng.hpp"

#include <cmath>
#include <numbers>

namespace qtw::rng {

double GaussianStream::next() {
  if (has_spare) {
    has_spare = false;
    return spare;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - rng.next_unit();
  double u2 = rng.next_unit();
  double mag = std::sqrt(-2.0 * std::log(u1));
  double ang = 2.0 * std::numbers::pi * u2;
  spare = mag * std::sin(ang);
  has_spare = true;
  return mag * std::cos(ang);
}

}  // namespace qtw::rng
