#pragma once

// Central-finite-difference oracle for the model's analytic gradients. Test
// support code only; the oracle touches the implementation solely through
// forward() and the public tensor list.

#include <cmath>
#include <string>
#include <vector>

#include <logatlas/tinymodel.hpp>

namespace logatlas::testing {

inline double lm_loss_only(const TinyModel& model,
                           const std::vector<std::vector<int>>& batch) {
    double total = 0.0;
    for (const auto& tokens : batch) {
        double aux = 0.0;
        const Mat logits = model.forward(tokens, false, nullptr, nullptr, &aux);
        const int T = static_cast<int>(tokens.size());
        double ce = 0.0;
        for (int t = 0; t + 1 < T; ++t) {
            double mx = logits.at(t, 0);
            for (int j = 1; j < logits.cols; ++j)
                mx = std::max(mx, logits.at(t, j));
            double sum = 0.0;
            for (int j = 0; j < logits.cols; ++j)
                sum += std::exp(logits.at(t, j) - mx);
            ce += mx + std::log(sum) -
                  logits.at(t, tokens[static_cast<std::size_t>(t) + 1]);
        }
        total += ce / (T - 1) + aux;
    }
    return total / static_cast<double>(batch.size());
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    std::int64_t params_checked = 0;
};

// Relative error with a small absolute floor in the denominator: finite
// differences carry ~1e-10 of cancellation noise, which would otherwise
// dominate the ratio for near-zero gradients.
inline GradCheckResult grad_check_lm(TinyModel& model,
                                     const std::vector<std::vector<int>>& batch,
                                     double eps = 1e-5) {
    model.zero_grads();
    lm_loss_and_grads(model, batch, false, nullptr);

    GradCheckResult result;
    for (Tensor* t : model.trainable_tensors()) {
        for (std::size_t i = 0; i < t->value.d.size(); ++i) {
            const double saved = t->value.d[i];
            t->value.d[i] = saved + eps;
            const double lp = lm_loss_only(model, batch);
            t->value.d[i] = saved - eps;
            const double lm = lm_loss_only(model, batch);
            t->value.d[i] = saved;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double analytic = t->grad.d[i];
            const double err = std::abs(numeric - analytic);
            const double rel =
                err / std::max(std::abs(numeric) + std::abs(analytic), 1e-5);
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_tensor = t->name;
            }
            ++result.params_checked;
        }
    }
    return result;
}

}  // namespace logatlas::testing
