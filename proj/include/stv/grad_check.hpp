#ifndef STV_GRAD_CHECK_HPP
#define STV_GRAD_CHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "stv/ops.hpp"

namespace stv {

struct GradCheckReport {
    struct PerInput {
        double max_rel_err = 0.0;
        int64_t worst_index = -1;
    };
    std::vector<PerInput> inputs;
    double max_rel_err = 0.0;
    bool pass = false;
    std::string summary() const;
};

// Compares tape gradients of a scalar-valued function against central finite
// differences. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator. Differences below atol are treated as zero: central
// differences at step h carry ~|f|*eps/h of cancellation noise, which
// otherwise shows up as spurious error wherever a gradient is structurally
// zero (e.g. through a layer-norm whose output is summed). Failures are
// reported, never thrown.
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double h = 1e-5, double tol = 1e-4,
                           double atol = 1e-7);

}  // namespace stv

#endif  // STV_GRAD_CHECK_HPP
