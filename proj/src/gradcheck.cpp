#include "hyphgt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hyphgt/errors.hpp"

namespace hyphgt::ad {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
    const double v = loss().item();
    if (!std::isfinite(v)) throw DomainError("finite_diff_check: loss evaluated to a non-finite value");
    return v;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss, const std::vector<Parameter>& params,
                                  double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-4)) throw ContractError("finite_diff_check: eps must lie in [1e-7, 1e-4]");

    for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
    }
    Tensor l = loss();
    if (!std::isfinite(l.item())) throw DomainError("finite_diff_check: loss evaluated to a non-finite value");
    l.backward();

    GradCheckReport report;
    for (const auto& p : params) {
        Tensor t = p.tensor;
        const auto analytic = t.grad();
        auto values = t.mutable_data();
        GradCheckGroup group{p.name, values.size()};
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = evaluate(loss);
            values[i] = saved - eps;
            const double down = evaluate(loss);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
            if (i == 0 || err > group.max_rel_error) {
                group.max_rel_error = err;
                group.worst_index = i;
                group.analytic = analytic[i];
                group.numeric = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
        report.groups.push_back(std::move(group));
    }
    return report;
}

}  // namespace hyphgt::ad
