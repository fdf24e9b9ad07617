#include "ptsr/training.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

namespace ptsr {

namespace {

ParamRefs trainable(ParamRefs params) {
    std::erase_if(params, [](const Parameter* p) { return !p->trainable; });
    return params;
}

double global_grad_norm(const ParamRefs& params) {
    double s = 0;
    for (const Parameter* p : params)
        for (double g : p->grad.data()) s += g * g;
    return std::sqrt(s);
}

void clip_gradients(const ParamRefs& params, double max_norm) {
    if (max_norm <= 0.0) return;
    const double n = global_grad_norm(params);
    if (n <= max_norm || n == 0.0) return;
    const double f = max_norm / n;
    for (Parameter* p : params)
        for (double& g : p->grad.data()) g *= f;
}

std::string batch_ids(const std::vector<PairedSample>& batch) {
    std::string out;
    for (const auto& s : batch) {
        if (!out.empty()) out += ", ";
        out += fmt::format("{}@({},{})", s.source_id.empty() ? "?" : s.source_id, s.lr_y, s.lr_x);
    }
    return out;
}

ad::Var batch_mean(const std::vector<ad::Var>& terms) {
    ad::Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
    return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

ad::Var upsampled_input(const PairedSample& s) {
    return ad::resize_bilinear(ad::constant(s.lr), s.hr.dim(0), s.hr.dim(1));
}

}  // namespace

void adam_update(const ParamRefs& params, AdamMoments& st, double lr, const TrainConfig& cfg) {
    const ParamRefs ps = trainable(params);
    if (st.m.empty()) {
        for (const Parameter* p : ps) {
            st.m.emplace_back(p->value.shape());
            st.v.emplace_back(p->value.shape());
        }
    }
    if (st.m.size() != ps.size()) throw std::logic_error("adam: parameter list changed");
    ++st.t;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Tensor& w = ps[i]->value;
        const Tensor& g = ps[i]->grad;
        Tensor& m = st.m[i];
        Tensor& v = st.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
        }
    }
}

TrainState TrainState::create(const ExperimentConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.config = cfg;
    st.gen = Generator(cfg.generator);
    st.disc = Discriminator(cfg.discriminator);
    st.lr = cfg.train.lr0;
    st.rng = Rng(cfg.train.seed);
    return st;
}

StepLosses train_step(TrainState& st, const std::vector<PairedSample>& batch) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const auto& cfg = st.config;
    const int scale = cfg.training_scale();
    for (const auto& s : batch) {
        if (s.scale != scale || s.hr.dim(0) != static_cast<std::size_t>(scale) * s.lr.dim(0))
            throw ShapeError(fmt::format("train_step: sample '{}' is not an aligned {}x pair",
                                         s.source_id, scale));
    }
    const ForwardContext ctx{cfg.generator.transformer.dropout > 0 ||
                                     cfg.discriminator.encoder.dropout > 0
                                 ? &st.rng
                                 : nullptr,
                             nullptr};
    ParamRefs g_params = st.gen.parameters();
    ParamRefs d_params = st.disc.parameters();

    std::vector<ad::Var> ys, xups;
    for (const auto& s : batch) {
        ys.push_back(st.gen.forward(ad::constant(s.lr), scale, ctx));
        xups.push_back(upsampled_input(s));
    }

    // Discriminator: fake is the clamped output, detached from G.
    StepLosses out;
    {
        zero_grads(d_params);
        std::vector<ad::Var> terms;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto fake = st.disc.logit(concat_condition(xups[i], ad::constant(ys[i].value())), ctx);
            const auto real = st.disc.logit(concat_condition(xups[i], ad::constant(batch[i].hr)), ctx);
            terms.push_back(discriminator_loss_logits(fake, real));
        }
        const auto l_d = batch_mean(terms);
        out.l_d = l_d.value()[0];
        if (!std::isfinite(out.l_d))
            throw NumericError(fmt::format("non-finite L_D at step {} (batch: {})", st.step + 1,
                                           batch_ids(batch)));
        ad::backward(l_d);
        clip_gradients(trainable(d_params), cfg.train.clip_norm);
        adam_update(d_params, st.adam_d, st.lr, cfg.train);
    }

    // Generator against the updated discriminator.
    {
        zero_grads(g_params);
        std::vector<ad::Var> adv, rec;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (cfg.loss.w_adv != 0.0)
                adv.push_back(generator_adv_loss_logits(
                    st.disc.logit(concat_condition(xups[i], ys[i]), ctx)));
            rec.push_back(reconstruction_loss(ad::constant(batch[i].hr), ys[i], xups[i], cfg.loss));
        }
        const auto l_r = batch_mean(rec);
        const auto l_g = adv.empty() ? ad::constant(Tensor({1})) : batch_mean(adv);
        const auto total = total_generator_loss(l_g, l_r, cfg.loss);
        out.l_r = l_r.value()[0];
        out.l_g = l_g.value()[0];
        out.total_g = total.value()[0];
        if (!std::isfinite(out.total_g))
            throw NumericError(fmt::format("non-finite generator loss at step {} (batch: {})",
                                           st.step + 1, batch_ids(batch)));
        ad::backward(total);
        zero_grads(d_params);  // D gradients from this pass are discarded
        clip_gradients(trainable(g_params), cfg.train.clip_norm);
        adam_update(g_params, st.adam_g, st.lr, cfg.train);
    }
    ++st.step;
    return out;
}

double validation_loss(Generator& gen, const std::vector<PairedSample>& pairs, int scale,
                       const LossConfig& loss) {
    if (pairs.empty()) throw std::invalid_argument("validation_loss: no pairs");
    ad::NoGradGuard g;
    double sum = 0;
    for (const auto& p : pairs) {
        const auto y = gen.forward(ad::constant(p.lr), scale);
        sum += reconstruction_loss(ad::constant(p.hr), y, upsampled_input(p), loss).value()[0];
    }
    return sum / static_cast<double>(pairs.size());
}

bool plateau_schedule(TrainState& st, double val) {
    const auto& t = st.config.train;
    if (val < st.best_val - t.plateau_tolerance) {
        st.best_val = val;
        st.since_improvement = 0;
        return false;
    }
    if (++st.since_improvement < t.plateau_patience) return false;
    ++st.triggers;
    st.lr = t.lr0 * std::pow(t.plateau_factor, static_cast<double>(st.triggers));
    st.since_improvement = 0;
    return true;
}

std::vector<PairedSample> validation_pairs(const std::vector<CorpusImage>& images,
                                           const ExperimentConfig& cfg) {
    const int scale = cfg.training_scale();
    const auto s = static_cast<std::size_t>(scale);
    const std::size_t ch = s * cfg.generator.lr_height, cw = s * cfg.generator.lr_width;
    std::vector<PairedSample> out;
    for (const auto& img : images) {
        if (img.image.dim(0) < ch || img.image.dim(1) < cw) continue;
        PairedSample p;
        p.scale = scale;
        p.source_id = img.id;
        p.hr = crop_image(img.image, (img.image.dim(0) - ch) / 2 / s * s,
                          (img.image.dim(1) - cw) / 2 / s * s, ch, cw);
        p.lr = synthesize_lr(p.hr, scale);
        out.push_back(std::move(p));
    }
    return out;
}

void write_step_log_header(std::ostream& os) { os << "step,epoch,L_D,L_G,L_R,lr\n"; }
void write_epoch_log_header(std::ostream& os) { os << "epoch,val_L_R,lr,improved\n"; }

void run_training(TrainState& st, const PairSampler& sampler, const std::vector<PairedSample>& val,
                  const TrainLoopHooks& hooks) {
    const auto& t = st.config.train;
    const int scale = st.config.training_scale();
    if (st.step == 0 && std::isinf(st.best_val) && !val.empty())
        st.best_val = validation_loss(st.gen, val, scale, st.config.loss);
    const std::size_t per_epoch =
        t.steps_per_epoch > 0 ? t.steps_per_epoch
                              : (sampler.size() + t.batch_size - 1) / t.batch_size;
    auto budget_left = [&] { return t.max_steps == 0 || st.step < t.max_steps; };
    while (st.epoch < t.max_epochs && budget_left()) {
        while (st.epoch_step < per_epoch && budget_left()) {
            const auto batch = sampler.batch(t.batch_size, st.rng);
            const StepLosses l = train_step(st, batch);
            ++st.epoch_step;
            if (hooks.step_log)
                *hooks.step_log << fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g}\n", st.step,
                                               st.epoch + 1, l.l_d, l.l_g, l.l_r, st.lr);
        }
        if (st.epoch_step < per_epoch) break;  // step budget ran out mid-epoch
        st.epoch_step = 0;
        ++st.epoch;
        bool improved = false;
        if (!val.empty()) {
            const double v = validation_loss(st.gen, val, scale, st.config.loss);
            const double before = st.best_val;
            plateau_schedule(st, v);
            improved = st.best_val < before;
            if (hooks.epoch_log)
                *hooks.epoch_log << fmt::format("{},{:.9g},{:.9g},{}\n", st.epoch, v, st.lr,
                                                improved ? 1 : 0);
        }
        if (hooks.checkpoint) {
            if (improved) hooks.checkpoint(st, true);
            if (t.checkpoint_every > 0 && st.epoch % t.checkpoint_every == 0)
                hooks.checkpoint(st, false);
        }
    }
}

}  // namespace ptsr
