#include "ptsr/losses.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace ptsr {

std::string to_string(LossVariant v) {
    switch (v) {
        case LossVariant::R: return "R";
        case LossVariant::R1: return "R1";
        case LossVariant::R2: return "R2";
    }
    return "R";
}

LossVariant loss_variant_from_string(const std::string& s) {
    if (s == "R") return LossVariant::R;
    if (s == "R1") return LossVariant::R1;
    if (s == "R2") return LossVariant::R2;
    throw std::invalid_argument(fmt::format("unknown loss variant '{}' (expected R, R1, R2)", s));
}

void LossConfig::validate() const {
    if (!(w_adv >= 0.0 && w_rec >= 0.0) || std::abs(w_adv + w_rec - 1.0) > 1e-12) {
        throw std::invalid_argument(
            fmt::format("loss weights must be non-negative and sum to 1 (got {} + {})", w_adv,
                        w_rec));
    }
    if (!(bce_eps > 0.0 && bce_eps < 0.5)) throw std::invalid_argument("bce_eps out of range");
}

ad::Var learnable_feature(const ad::Var& y, const ad::Var& x_up) {
    if (y.shape() != x_up.shape()) {
        throw ShapeError(fmt::format("learnable_feature: {} vs {}", shape_str(y.shape()),
                                     shape_str(x_up.shape())));
    }
    return ad::sub(y, x_up);
}

Tensor learnable_feature(const Tensor& y, const Tensor& x_up) {
    ad::NoGradGuard g;
    return learnable_feature(ad::constant(y), ad::constant(x_up)).value();
}

ad::Var reconstruction_loss(const ad::Var& y_real, const ad::Var& y_sr, const ad::Var& x_up,
                            const LossConfig& cfg) {
    if (y_real.shape() != y_sr.shape() || y_real.shape() != x_up.shape()) {
        throw ShapeError(fmt::format("reconstruction_loss: shapes {}, {}, {} differ",
                                     shape_str(y_real.shape()), shape_str(y_sr.shape()),
                                     shape_str(x_up.shape())));
    }
    const auto diff = ad::sub(learnable_feature(y_real, x_up), learnable_feature(y_sr, x_up));
    const double inv_n = 1.0 / static_cast<double>(y_real.value().size());
    auto l2 = [&] { return cfg.squared_l2 ? ad::sum_squares(diff) : ad::l2_norm(diff); };
    switch (cfg.variant) {
        case LossVariant::R1: return ad::scale(ad::abs_sum(diff), inv_n);
        case LossVariant::R2: return ad::scale(l2(), inv_n);
        case LossVariant::R: break;
    }
    return ad::scale(ad::add(ad::abs_sum(diff), l2()), inv_n);
}

double reconstruction_loss(const Tensor& y_real, const Tensor& y_sr, const Tensor& x_up,
                           const LossConfig& cfg) {
    ad::NoGradGuard g;
    return reconstruction_loss(ad::constant(y_real), ad::constant(y_sr), ad::constant(x_up), cfg)
        .value()[0];
}

namespace {

void check_probabilities(const ad::Var& p, const char* what) {
    if (p.value().empty()) throw std::invalid_argument(fmt::format("{}: empty batch", what));
    for (double v : p.value().data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::domain_error(fmt::format("{}: discriminator output {} is not a probability",
                                                what, v));
        }
    }
}

ad::Var to_var(const std::vector<double>& v) { return ad::constant(Tensor({v.size()}, v)); }

}  // namespace

ad::Var generator_adv_loss(const ad::Var& d_fake_prob, const LossConfig& cfg) {
    check_probabilities(d_fake_prob, "generator_adv_loss");
    return ad::bce_prob(d_fake_prob, 1.0, cfg.bce_eps);
}

ad::Var generator_adv_loss_logits(const ad::Var& d_fake_logit) {
    return ad::bce_logits(d_fake_logit, 1.0);
}

ad::Var discriminator_loss(const ad::Var& d_fake_prob, const ad::Var& d_real_prob,
                           const LossConfig& cfg) {
    check_probabilities(d_fake_prob, "discriminator_loss");
    check_probabilities(d_real_prob, "discriminator_loss");
    return ad::scale(ad::add(ad::bce_prob(d_fake_prob, 0.0, cfg.bce_eps),
                             ad::bce_prob(d_real_prob, 1.0, cfg.bce_eps)),
                     0.5);
}

ad::Var discriminator_loss_logits(const ad::Var& d_fake_logit, const ad::Var& d_real_logit) {
    return ad::scale(
        ad::add(ad::bce_logits(d_fake_logit, 0.0), ad::bce_logits(d_real_logit, 1.0)), 0.5);
}

double generator_adv_loss(const std::vector<double>& d_fake_prob, const LossConfig& cfg) {
    ad::NoGradGuard g;
    return generator_adv_loss(to_var(d_fake_prob), cfg).value()[0];
}

double discriminator_loss(const std::vector<double>& d_fake_prob,
                          const std::vector<double>& d_real_prob, const LossConfig& cfg) {
    ad::NoGradGuard g;
    return discriminator_loss(to_var(d_fake_prob), to_var(d_real_prob), cfg).value()[0];
}

ad::Var total_generator_loss(const ad::Var& adv, const ad::Var& rec, const LossConfig& cfg) {
    return ad::add(ad::scale(adv, cfg.w_adv), ad::scale(rec, cfg.w_rec));
}

double total_generator_loss(double adv, double rec, const LossConfig& cfg) {
    return cfg.w_adv * adv + cfg.w_rec * rec;
}

}  // namespace ptsr
