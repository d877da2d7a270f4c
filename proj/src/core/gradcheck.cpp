#include "gradcheck.hpp"

#include <cmath>

namespace hamlet {

namespace {
double eval_scalar(const std::function<Tensor()>& f) {
    const double v = f().item();
    if (!std::isfinite(v)) throw std::runtime_error("check_gradients: function evaluated non-finite");
    return v;
}
}  // namespace

GradCheckReport check_gradients(const std::function<Tensor()>& f,
                                const std::vector<std::pair<std::string, Tensor>>& params,
                                double eps) {
    for (auto& [name, t] : params) {
        Tensor copy = t;
        copy.zero_grad();
    }
    Tensor loss = f();
    if (loss.numel() != 1) throw ConfigError("check_gradients: f must return a scalar");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, t] : params) {
        const auto* g = t.grad_if_present();
        analytic.push_back(g ? *g : std::vector<double>(t.numel(), 0.0));
    }

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor t = params[pi].second;
        auto& vals = t.data();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + eps;
            const double fp = eval_scalar(f);
            vals[i] = saved - eps;
            const double fm = eval_scalar(f);
            vals[i] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double an = analytic[pi][i];
            const double rel = std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-12);
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[pi].first;
                report.worst_index = i;
            }
        }
    }
    return report;
}

}  // namespace hamlet
