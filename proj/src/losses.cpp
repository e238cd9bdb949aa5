#include "deblur/losses.hpp"

#include "deblur/errors.hpp"

#include <algorithm>
#include <cmath>

namespace deblur {

namespace {

inline double clamp_prob(double p) {
    return std::min(1.0 - kLogClampEps, std::max(kLogClampEps, p));
}

void check_levels(const std::vector<Tensor>& latents, const std::vector<Tensor>& sharps) {
    if (latents.empty() || latents.size() != sharps.size())
        throw ShapeError("content_loss: level count mismatch");
    for (std::size_t k = 0; k < latents.size(); ++k)
        if (!(latents[k].shape == sharps[k].shape))
            throw ShapeError("content_loss: level " + std::to_string(k + 1) + " shapes " +
                             latents[k].shape.str() + " vs " + sharps[k].shape.str());
}

} // namespace

std::pair<double, std::vector<double>> content_loss(const std::vector<Tensor>& latents,
                                                    const std::vector<Tensor>& sharps) {
    check_levels(latents, sharps);
    const std::size_t K = latents.size();
    std::vector<double> per_level(K, 0.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const Tensor& L = latents[k];
        const Tensor& S = sharps[k];
        double acc = 0.0;
        for (std::size_t i = 0; i < L.v.size(); ++i) {
            const double d = L.v[i] - S.v[i];
            acc += d * d;
        }
        per_level[k] = acc / static_cast<double>(L.size());
        sum += per_level[k];
    }
    return {sum / (2.0 * static_cast<double>(K)), per_level};
}

std::vector<Tensor> content_loss_grad(const std::vector<Tensor>& latents,
                                      const std::vector<Tensor>& sharps) {
    check_levels(latents, sharps);
    const double K = static_cast<double>(latents.size());
    std::vector<Tensor> grads;
    grads.reserve(latents.size());
    for (std::size_t k = 0; k < latents.size(); ++k) {
        const Tensor& L = latents[k];
        const Tensor& S = sharps[k];
        Tensor g(L.shape);
        const double scale = 1.0 / (K * static_cast<double>(L.size()));
        for (std::size_t i = 0; i < L.v.size(); ++i)
            g.v[i] = (L.v[i] - S.v[i]) * scale;
        grads.push_back(std::move(g));
    }
    return grads;
}

double adversarial_d_loss(const std::vector<double>& d_real,
                          const std::vector<double>& d_fake) {
    if (d_real.empty() || d_fake.empty())
        throw ValueError("adversarial_d_loss: empty probability batch");
    double real_term = 0.0;
    for (double p : d_real)
        real_term -= std::log(clamp_prob(p));
    double fake_term = 0.0;
    for (double p : d_fake)
        fake_term -= std::log(1.0 - clamp_prob(p));
    return real_term / static_cast<double>(d_real.size()) +
           fake_term / static_cast<double>(d_fake.size());
}

std::pair<std::vector<double>, std::vector<double>>
adversarial_d_loss_grad(const std::vector<double>& d_real,
                        const std::vector<double>& d_fake) {
    if (d_real.empty() || d_fake.empty())
        throw ValueError("adversarial_d_loss_grad: empty probability batch");
    std::vector<double> gr(d_real.size());
    std::vector<double> gf(d_fake.size());
    for (std::size_t i = 0; i < d_real.size(); ++i)
        gr[i] = -1.0 / (clamp_prob(d_real[i]) * static_cast<double>(d_real.size()));
    for (std::size_t i = 0; i < d_fake.size(); ++i)
        gf[i] = 1.0 / ((1.0 - clamp_prob(d_fake[i])) * static_cast<double>(d_fake.size()));
    return {std::move(gr), std::move(gf)};
}

double adversarial_g_loss(const std::vector<double>& d_fake, bool non_saturating) {
    if (d_fake.empty())
        throw ValueError("adversarial_g_loss: empty probability batch");
    double loss = 0.0;
    for (double p : d_fake)
        loss += non_saturating ? -std::log(clamp_prob(p))
                               : std::log(1.0 - clamp_prob(p));
    return loss / static_cast<double>(d_fake.size());
}

std::vector<double> adversarial_g_loss_grad(const std::vector<double>& d_fake,
                                            bool non_saturating) {
    if (d_fake.empty())
        throw ValueError("adversarial_g_loss_grad: empty probability batch");
    std::vector<double> g(d_fake.size());
    const double n = static_cast<double>(d_fake.size());
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        const double p = clamp_prob(d_fake[i]);
        g[i] = non_saturating ? -1.0 / (p * n) : -1.0 / ((1.0 - p) * n);
    }
    return g;
}

double total_loss(double content, double adv_g, double lambda) {
    if (!std::isfinite(content) || !std::isfinite(adv_g))
        throw NumericalError("total_loss: non-finite input");
    return content + lambda * adv_g;
}

} // namespace deblur
