#pragma once

#include <string>
#include <vector>

#include "ptsr/autodiff.hpp"

namespace ptsr {

/// Reconstruction-loss ablation arms: R1 keeps only the L1 term, R2 only the
/// L2 term, R both.
enum class LossVariant { R, R1, R2 };
std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

struct LossConfig {
    LossVariant variant = LossVariant::R;
    double w_adv = 0.4;
    double w_rec = 0.6;
    /// Sensitivity switch: use the squared Euclidean norm for the L2 term.
    bool squared_l2 = false;
    double bce_eps = 1e-7;

    void validate() const;
};

/// Y - X_up: the residual the generator has to produce (or did produce).
ad::Var learnable_feature(const ad::Var& y, const ad::Var& x_up);
Tensor learnable_feature(const Tensor& y, const Tensor& x_up);

/// (1/N) (||L_ln - L_ld||_1 + ||L_ln - L_ld||_2) with N the element count of
/// the super-resolved image; the variant selects which terms are kept.
ad::Var reconstruction_loss(const ad::Var& y_real, const ad::Var& y_sr, const ad::Var& x_up,
                            const LossConfig& cfg = {});
double reconstruction_loss(const Tensor& y_real, const Tensor& y_sr, const Tensor& x_up,
                           const LossConfig& cfg = {});

// Adversarial terms. Inputs are batches of shape {B} (or {B, 1}). The
// probability forms reject values outside [0, 1]; the logit forms are the
// fused, numerically stable equivalents used in training.
ad::Var generator_adv_loss(const ad::Var& d_fake_prob, const LossConfig& cfg = {});
ad::Var generator_adv_loss_logits(const ad::Var& d_fake_logit);
ad::Var discriminator_loss(const ad::Var& d_fake_prob, const ad::Var& d_real_prob,
                           const LossConfig& cfg = {});
ad::Var discriminator_loss_logits(const ad::Var& d_fake_logit, const ad::Var& d_real_logit);

double generator_adv_loss(const std::vector<double>& d_fake_prob, const LossConfig& cfg = {});
double discriminator_loss(const std::vector<double>& d_fake_prob,
                          const std::vector<double>& d_real_prob, const LossConfig& cfg = {});

/// w_adv * L_G + w_rec * L_R.
ad::Var total_generator_loss(const ad::Var& adv, const ad::Var& rec, const LossConfig& cfg = {});
double total_generator_loss(double adv, double rec, const LossConfig& cfg = {});

}  // namespace ptsr
