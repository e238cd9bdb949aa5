#include "deblur/adam.hpp"

#include "deblur/errors.hpp"

#include <cmath>
#include <string>

namespace deblur {

void adam_update(std::span<double> param, std::span<const double> grad,
                 AdamBuffers& buf, std::int64_t step, const AdamHyper& hp, double lr) {
    if (param.size() != grad.size())
        throw ShapeError("adam_update: param/grad size mismatch");
    if (buf.m.size() != param.size())
        throw ShapeError("adam_update: moment buffers do not match parameter size");
    if (step < 1)
        throw ValueError("adam_update: step counter must be >= 1");

    for (double g : grad)
        if (!std::isfinite(g))
            throw NumericalError("adam_update: non-finite gradient");

    const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        buf.m[i] = hp.beta1 * buf.m[i] + (1.0 - hp.beta1) * g;
        buf.v[i] = hp.beta2 * buf.v[i] + (1.0 - hp.beta2) * g * g;
        const double mhat = buf.m[i] / c1;
        const double vhat = buf.v[i] / c2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + hp.epsilon);
    }
}

} // namespace deblur
