#include "deblur/gradcheck.hpp"

#include "deblur/errors.hpp"

#include <algorithm>
#include <cmath>

namespace deblur {

namespace {

struct CentralDiff {
    GradSlot const* slot;
    std::size_t index;
    const std::function<double()>* forward;

    double at(double eps) const {
        const double saved = slot->param[index];
        slot->param[index] = saved + eps;
        const double fp = (*forward)();
        slot->param[index] = saved - eps;
        const double fm = (*forward)();
        slot->param[index] = saved;
        return (fp - fm) / (2.0 * eps);
    }
};

inline double rel_diff(double a, double b) {
    const double denom = std::max(std::abs(a) + std::abs(b), 1e-12);
    return std::abs(a - b) / denom;
}

} // namespace

GradCheckReport gradcheck(const std::vector<GradSlot>& slots,
                          const std::function<void()>& compute_grads,
                          const std::function<double()>& forward_scalar,
                          double tolerance, double fd_epsilon,
                          Rng& rng, int samples_per_slot) {
    if (fd_epsilon <= 0.0 || tolerance <= 0.0)
        throw ValueError("gradcheck: tolerance and epsilon must be positive");

    compute_grads();

    GradCheckReport rep;
    rep.tolerance = tolerance;
    int kink_skipped = 0;
    for (const GradSlot& slot : slots) {
        if (slot.size == 0)
            continue;
        const int samples = static_cast<int>(
            std::min<std::size_t>(slot.size, static_cast<std::size_t>(samples_per_slot)));
        for (int s = 0; s < samples; ++s) {
            const std::size_t i = static_cast<std::size_t>(
                rng.uniform_int(static_cast<int>(slot.size)));
            const CentralDiff cd{&slot, i, &forward_scalar};

            // Central differences converge quadratically on smooth segments,
            // so two stencil widths must agree. Disagreement means a ReLU
            // kink sits inside the wider stencil; shrink until clear of it.
            double numeric = cd.at(fd_epsilon);
            const double refined = cd.at(fd_epsilon / 8.0);
            if (rel_diff(numeric, refined) > tolerance / 4.0) {
                const double local = cd.at(fd_epsilon / 64.0);
                if (rel_diff(refined, local) > tolerance / 4.0) {
                    ++kink_skipped; // kink closer than ε/64: no valid stencil
                    continue;
                }
                numeric = local;
            }

            const double analytic = slot.grad[i];
            ++rep.coords_checked;
            const double denom = std::abs(analytic) + std::abs(numeric);
            if (denom < 1e-8)
                continue;
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_slot = slot.name;
                rep.worst_index = i;
            }
        }
    }
    // A flood of kink hits would mean the fixture is unusable, not unlucky.
    const bool coverage_ok =
        rep.coords_checked > 0 && kink_skipped * 5 <= rep.coords_checked;
    rep.pass = coverage_ok && rep.max_rel_err <= tolerance;
    return rep;
}

} // namespace deblur
