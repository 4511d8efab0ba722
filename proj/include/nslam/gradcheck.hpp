// Central-difference verification of reverse-mode gradients.
//
// A "program" is any callable evaluable for both scalar types:
//   S operator()(const std::vector<S>&) const   with S in {double, Value}.
// The analytic gradient comes from one taped evaluation; the reference comes
// from re-evaluating the program at x ± step per coordinate, so value-dependent
// branches are honestly re-traced.
#pragma once

#include "nslam/tape.hpp"

#include <cmath>
#include <vector>

namespace nslam {

struct GradCheckReport {
    double max_rel_error = 0;
    size_t worst_index = 0;
    double analytic_at_worst = 0, numeric_at_worst = 0;
};

template <class F>
GradCheckReport check_gradients_report(F&& program, const std::vector<double>& x0, double step) {
    Tape tape;
    std::vector<double> analytic;
    {
        TapeScope scope(tape);
        std::vector<Value> xs;
        xs.reserve(x0.size());
        for (double v : x0) xs.push_back(tape.parameter(v));
        Value out = program(xs);
        if (!std::isfinite(out.val())) throw NonFiniteValue("check_gradients: program value is not finite");
        analytic = backward(tape, out).raw();
    }

    GradCheckReport rep;
    std::vector<double> x = x0;
    for (size_t i = 0; i < x.size(); ++i) {
        double saved = x[i];
        x[i] = saved + step;
        double fp = program(x);
        x[i] = saved - step;
        double fm = program(x);
        x[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic[i]))
            throw NonFiniteValue("check_gradients: non-finite value encountered");
        double fd = (fp - fm) / (2.0 * step);
        double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        if (err > rep.max_rel_error) {
            rep.max_rel_error = err;
            rep.worst_index = i;
            rep.analytic_at_worst = analytic[i];
            rep.numeric_at_worst = fd;
        }
    }
    return rep;
}

// max over parameters of |analytic - central difference| / max(1, |central difference|)
template <class F>
double check_gradients(F&& program, const std::vector<double>& x0, double step) {
    return check_gradients_report(std::forward<F>(program), x0, step).max_rel_error;
}

}  // namespace nslam
