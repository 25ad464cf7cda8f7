#include "stv/grad_check.hpp"

#include <cmath>
#include <sstream>

namespace stv {

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "pass" : "FAIL") << " max_rel_err=" << max_rel_err;
    for (size_t i = 0; i < inputs.size(); ++i) {
        os << " input" << i << "=" << inputs[i].max_rel_err;
    }
    return os.str();
}

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double h, double tol, double atol) {
    for (Tensor& t : inputs) t.set_requires_grad(true);
    for (Tensor& t : inputs) t.zero_grad();

    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = f(inputs);
        if (loss.size() != 1) throw ContractError("grad_check: f must return a scalar");
        backward(tape, loss);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (Tensor& t : inputs) analytic.push_back(t.grad());

    auto eval = [&]() {
        Tensor y = f(inputs);
        return y.item();
    };

    GradCheckReport report;
    report.inputs.resize(inputs.size());
    for (size_t k = 0; k < inputs.size(); ++k) {
        auto& vals = inputs[k].values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double up = eval();
            vals[i] = orig - h;
            const double dn = eval();
            vals[i] = orig;
            const double numeric = (up - dn) / (2.0 * h);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) <= atol ? 0.0
                                                             : std::abs(a - numeric) / denom;
            if (rel > report.inputs[k].max_rel_err) {
                report.inputs[k].max_rel_err = rel;
                report.inputs[k].worst_index = static_cast<int64_t>(i);
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, report.inputs[k].max_rel_err);
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace stv
