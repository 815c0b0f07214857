#include "sodetr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sodetr {

namespace {

double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  Tensor leaf(x.shape(), x.value(), true);
  return finite_diff_check([&] { return f(leaf); }, leaf, h);
}

double finite_diff_check(const std::function<Tensor()>& loss, Tensor param, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_diff_check: h must be positive");
  const Array analytic = backward(loss()).of(param);
  Array& v = param.mutable_value();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double saved = v(i);
    double plus, minus, step;
    {
      NoGradGuard guard;
      v(i) = saved + h;
      const double hi = v(i);
      plus = loss().item();
      v(i) = saved - h;
      step = hi - v(i);  // the step actually taken after rounding
      minus = loss().item();
    }
    v(i) = saved;
    worst = std::max(worst, relative_error(analytic(i), (plus - minus) / step));
  }
  return worst;
}

}  // namespace sodetr
