#include "icm/normal.hpp"

#include "icm/error.hpp"

#include <boost/math/distributions/normal.hpp>

namespace icm {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace icm
