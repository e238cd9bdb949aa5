#pragma once

#include "deblur/tensor.hpp"

#include <utility>
#include <vector>

namespace deblur {

struct LossBreakdown {
    double content = 0.0;
    double adversarial_g = 0.0;
    double adversarial_d = 0.0;
    double total = 0.0;
    std::vector<double> per_level_content;
};

// (1/2K) * sum_k ||L_k - S_k||^2 / (batch * c_k * w_k * h_k): per-level mean
// squared error over all elements (the mini-batch included), averaged over
// levels and halved. Returns (scalar, per-level MSE list).
std::pair<double, std::vector<double>> content_loss(const std::vector<Tensor>& latents,
                                                    const std::vector<Tensor>& sharps);

// d content / d L_k = (L_k - S_k) / (K * batch * c_k * w_k * h_k).
std::vector<Tensor> content_loss_grad(const std::vector<Tensor>& latents,
                                      const std::vector<Tensor>& sharps);

// Probabilities are clamped to [eps, 1-eps] inside every log so exact 0/1
// inputs stay finite.
inline constexpr double kLogClampEps = 1e-12;

// -[log d_real + log(1 - d_fake)], averaged over the batch; the discriminator
// minimizes this.
double adversarial_d_loss(const std::vector<double>& d_real,
                          const std::vector<double>& d_fake);

// Gradients w.r.t. (d_real, d_fake).
std::pair<std::vector<double>, std::vector<double>>
adversarial_d_loss_grad(const std::vector<double>& d_real,
                        const std::vector<double>& d_fake);

// Generator objective on fake probabilities, batch-averaged. The default is
// the saturating form log(1 - d_fake); non_saturating switches to -log d_fake.
double adversarial_g_loss(const std::vector<double>& d_fake, bool non_saturating = false);
std::vector<double> adversarial_g_loss_grad(const std::vector<double>& d_fake,
                                            bool non_saturating = false);

// content + lambda * adv_g.
double total_loss(double content, double adv_g, double lambda);

} // namespace deblur
