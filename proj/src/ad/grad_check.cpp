#include "simsr/ad/grad_check.hpp"

#include "simsr/error.hpp"

#include <cmath>

namespace simsr::ad {
namespace {

double evaluate(const ScalarFn& f, const Tensor& point) {
  Tape tape;
  Var x = tape.constant(point);
  Var y = f(tape, x);
  if (y.value().size() != 1) throw Error(Errc::not_scalar, "grad_check needs a scalar function");
  return y.value()[0];
}

}  // namespace

GradCheckResult grad_check_report(const ScalarFn& f, const Tensor& point, double h) {
  GradCheckResult r;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = f(tape, x);
    if (y.value().size() != 1) throw Error(Errc::not_scalar, "grad_check needs a scalar function");
    tape.backward(y);
    r.analytic = tape.grad(x);
  }
  r.numeric = Tensor(point.shape());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + h;
    const double fp = evaluate(f, probe);
    probe[i] = point[i] - h;
    const double fm = evaluate(f, probe);
    probe[i] = point[i];
    r.numeric[i] = (fp - fm) / (2.0 * h);
    const double err = std::abs(r.analytic[i] - r.numeric[i]) / (std::abs(r.analytic[i]) + 1e-8);
    if (err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = i;
    }
  }
  return r;
}

GradCheckResult grad_check_params(const LossFn& loss, ParamSet& params, const std::vector<ParamEntry>& entries,
                                  double h) {
  auto eval = [&] {
    Tape tape;
    Var y = loss(tape);
    if (y.value().size() != 1) throw Error(Errc::not_scalar, "grad_check needs a scalar loss");
    return y.value()[0];
  };
  GradCheckResult r;
  r.analytic = Tensor(Shape{entries.size()});
  r.numeric = Tensor(Shape{entries.size()});
  params.zero_grad();
  {
    Tape tape;
    Var y = loss(tape);
    tape.backward(y);
  }
  for (std::size_t e = 0; e < entries.size(); ++e) {
    auto& p = params.all().at(entries[e].param);
    if (entries[e].element >= p.value.size())
      throw Error(Errc::index_out_of_range, "entry " + std::to_string(e) + " outside parameter " + p.name);
    r.analytic[e] = p.grad[entries[e].element];
  }
  for (std::size_t e = 0; e < entries.size(); ++e) {
    auto& v = params.all()[entries[e].param].value[entries[e].element];
    const double saved = v;
    v = saved + h;
    const double fp = eval();
    v = saved - h;
    const double fm = eval();
    v = saved;
    r.numeric[e] = (fp - fm) / (2.0 * h);
    const double err = std::abs(r.analytic[e] - r.numeric[e]) / (std::abs(r.analytic[e]) + 1e-8);
    if (err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = e;
    }
  }
  return r;
}

}  // namespace simsr::ad
