#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "s2a/errors.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int64_t checked = 0;
    std::string worst;

    bool ok(double tol = 1e-4) const { return checked > 0 && max_rel_err <= tol; }
};

// Central-difference check of reverse-mode gradients, in double precision.
// `run(want_grad)` must rebuild the computation from the current parameter
// values and return the scalar loss; with want_grad it must also accumulate
// d(loss)/d(param) into each parameter's grad. Relative error per element is
// |fd - ad| / max(|fd|, |ad|, 1e-3).
inline GradCheckReport grad_check(const std::vector<Tensor<double>*>& params,
                                  const std::function<double(bool)>& run, double step = 1e-5) {
    if (params.empty()) throw UsageError("grad_check: no parameters given");
    for (auto* p : params) {
        p->requires_grad = true;
        p->ensure_grad();
        p->zero_grad();
    }
    run(true);

    GradCheckReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>& p = *params[pi];
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double saved = p.data[i];
            p.data[i] = saved + step;
            const double lp = run(false);
            p.data[i] = saved - step;
            const double lm = run(false);
            p.data[i] = saved;
            const double fd = (lp - lm) / (2.0 * step);
            const double ad = p.grad[i];
            const double rel =
                std::fabs(fd - ad) / std::max({std::fabs(fd), std::fabs(ad), 1e-3});
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = "param " + std::to_string(pi) + " elem " + std::to_string(i) +
                            " fd=" + std::to_string(fd) + " ad=" + std::to_string(ad);
            }
        }
    }
    return rep;
}

}  // namespace s2a
