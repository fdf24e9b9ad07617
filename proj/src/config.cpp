#include "ptsr/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace ptsr {

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw ConfigError(fmt::format("train.lr0 must be > 0 (got {})", lr0));
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
        throw ConfigError(fmt::format("train.plateau_factor must be in (0,1) (got {})", plateau_factor));
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("train.beta1 and train.beta2 must be in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (plateau_patience == 0) throw ConfigError("train.plateau_patience must be >= 1");
    if (clip_norm < 0.0) throw ConfigError("train.clip_norm must be >= 0");
}

ExperimentConfig::ExperimentConfig() { sync_discriminator_geometry(); }

void ExperimentConfig::sync_discriminator_geometry() {
    const auto s = static_cast<std::size_t>(training_scale());
    discriminator.height = s * generator.lr_height;
    discriminator.width = s * generator.lr_width;
}

void ExperimentConfig::validate() const {
    if (scale != 2 && scale != 4) throw ConfigError(fmt::format("scale must be 2 or 4 (got {})", scale));
    try {
        generator.validate();
        discriminator.validate();
        loss.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    train.validate();
    const auto s = static_cast<std::size_t>(training_scale());
    if (discriminator.height != s * generator.lr_height || discriminator.width != s * generator.lr_width)
        throw ConfigError(fmt::format(
            "discriminator geometry {}x{} must be {} x the generator geometry {}x{}",
            discriminator.height, discriminator.width, s, generator.lr_height, generator.lr_width));
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end)
        throw ConfigError(fmt::format("{}: cannot parse '{}'", key, v));
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(fmt::format("{}: expected true/false, got '{}'", key, v));
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

struct Field {
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <class T, class Member>
Field size_field(Member m) {
    return {[m](const ExperimentConfig& c) { return std::to_string(m(const_cast<ExperimentConfig&>(c))); },
            [m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                m(c) = parse_number<T>(k, v);
            }};
}

Field double_field(std::function<double&(ExperimentConfig&)> m) {
    return {[m](const ExperimentConfig& c) { return fmt_double(m(const_cast<ExperimentConfig&>(c))); },
            [m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                m(c) = parse_number<double>(k, v);
            }};
}

Field bool_field(std::function<bool&(ExperimentConfig&)> m) {
    return {[m](const ExperimentConfig& c) {
                return std::string(m(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
            },
            [m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                m(c) = parse_bool(k, v);
            }};
}

#define PTSR_SIZE(T, expr) size_field<T>([](ExperimentConfig& c) -> T& { return expr; })
#define PTSR_DOUBLE(expr) double_field([](ExperimentConfig& c) -> double& { return expr; })
#define PTSR_BOOL(expr) bool_field([](ExperimentConfig& c) -> bool& { return expr; })

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = {
        {"model.scale", PTSR_SIZE(int, c.scale)},
        {"model.compose",
         {[](const ExperimentConfig& c) { return to_string(c.compose); },
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.compose = compose_mode_from_string(v);
              } catch (const std::invalid_argument& e) {
                  throw ConfigError(fmt::format("{}: {}", k, e.what()));
              }
          }}},
        {"model.lr_height", PTSR_SIZE(std::size_t, c.generator.lr_height)},
        {"model.lr_width", PTSR_SIZE(std::size_t, c.generator.lr_width)},
        {"model.k", PTSR_SIZE(std::size_t, c.generator.k)},
        {"model.depth", PTSR_SIZE(std::size_t, c.generator.transformer.depth)},
        {"model.heads", PTSR_SIZE(std::size_t, c.generator.transformer.heads)},
        {"model.mlp_ratio", PTSR_DOUBLE(c.generator.transformer.mlp_ratio)},
        {"model.dropout", PTSR_DOUBLE(c.generator.transformer.dropout)},
        {"model.residual",
         {[](const ExperimentConfig& c) { return to_string(c.generator.transformer.residual); },
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.generator.transformer.residual = residual_mode_from_string(v);
              } catch (const std::invalid_argument& e) {
                  throw ConfigError(fmt::format("{}: {}", k, e.what()));
              }
          }}},
        {"model.seed", PTSR_SIZE(std::uint64_t, c.generator.seed)},
        {"disc.k", PTSR_SIZE(std::size_t, c.discriminator.k)},
        {"disc.dim", PTSR_SIZE(std::size_t, c.discriminator.encoder.dim)},
        {"disc.depth", PTSR_SIZE(std::size_t, c.discriminator.encoder.depth)},
        {"disc.heads", PTSR_SIZE(std::size_t, c.discriminator.encoder.heads)},
        {"disc.mlp_ratio", PTSR_DOUBLE(c.discriminator.encoder.mlp_ratio)},
        {"disc.dropout", PTSR_DOUBLE(c.discriminator.encoder.dropout)},
        {"disc.seed", PTSR_SIZE(std::uint64_t, c.discriminator.seed)},
        {"loss.variant",
         {[](const ExperimentConfig& c) { return to_string(c.loss.variant); },
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.loss.variant = loss_variant_from_string(v);
              } catch (const std::invalid_argument& e) {
                  throw ConfigError(fmt::format("{}: {}", k, e.what()));
              }
          }}},
        {"loss.w_adv", PTSR_DOUBLE(c.loss.w_adv)},
        {"loss.w_rec", PTSR_DOUBLE(c.loss.w_rec)},
        {"loss.squared_l2", PTSR_BOOL(c.loss.squared_l2)},
        {"loss.bce_eps", PTSR_DOUBLE(c.loss.bce_eps)},
        {"train.lr0", PTSR_DOUBLE(c.train.lr0)},
        {"train.beta1", PTSR_DOUBLE(c.train.beta1)},
        {"train.beta2", PTSR_DOUBLE(c.train.beta2)},
        {"train.adam_eps", PTSR_DOUBLE(c.train.adam_eps)},
        {"train.plateau_patience", PTSR_SIZE(std::size_t, c.train.plateau_patience)},
        {"train.plateau_factor", PTSR_DOUBLE(c.train.plateau_factor)},
        {"train.plateau_tolerance", PTSR_DOUBLE(c.train.plateau_tolerance)},
        {"train.batch_size", PTSR_SIZE(std::size_t, c.train.batch_size)},
        {"train.max_epochs", PTSR_SIZE(std::size_t, c.train.max_epochs)},
        {"train.steps_per_epoch", PTSR_SIZE(std::size_t, c.train.steps_per_epoch)},
        {"train.max_steps", PTSR_SIZE(std::size_t, c.train.max_steps)},
        {"train.clip_norm", PTSR_DOUBLE(c.train.clip_norm)},
        {"train.checkpoint_every", PTSR_SIZE(std::size_t, c.train.checkpoint_every)},
        {"train.seed", PTSR_SIZE(std::uint64_t, c.train.seed)},
        {"data.train_split",
         {[](const ExperimentConfig& c) { return c.data.train_split; },
          [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data.train_split = v; }}},
        {"data.val_split",
         {[](const ExperimentConfig& c) { return c.data.val_split; },
          [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data.val_split = v; }}},
        {"data.pair_mode",
         {[](const ExperimentConfig& c) { return to_string(c.data.pair_mode); },
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.data.pair_mode = pair_mode_from_string(v);
              } catch (const std::invalid_argument& e) {
                  throw ConfigError(fmt::format("{}: {}", k, e.what()));
              }
          }}},
        {"data.hflip", PTSR_BOOL(c.data.augment.hflip)},
        {"data.vflip", PTSR_BOOL(c.data.augment.vflip)},
        {"data.rot90", PTSR_BOOL(c.data.augment.rot90)},
        {"metrics.space",
         {[](const ExperimentConfig& c) { return to_string(c.metrics.space); },
          [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.metrics.space = metric_space_from_string(v);
              } catch (const std::invalid_argument& e) {
                  throw ConfigError(fmt::format("{}: {}", k, e.what()));
              }
          }}},
        {"metrics.shave", PTSR_SIZE(std::size_t, c.metrics.shave)},
    };
    return f;
}

#undef PTSR_SIZE
#undef PTSR_DOUBLE
#undef PTSR_BOOL

std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
}

}  // namespace

KeyValues to_key_values(const ExperimentConfig& cfg) {
    KeyValues kv;
    for (const auto& [k, f] : fields()) kv[k] = f.get(cfg);
    return kv;
}

ExperimentConfig apply_key_values(ExperimentConfig base, const KeyValues& kv) {
    for (const auto& [k, v] : kv) {
        const auto it = fields().find(k);
        if (it == fields().end()) throw ConfigError(fmt::format("unknown config key '{}'", k));
        it->second.set(base, k, v);
    }
    base.sync_discriminator_geometry();
    return base;
}

KeyValues parse_config_text(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(fmt::format("config line {}: expected key=value, got '{}'", lineno, line));
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues parse_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError(fmt::format("override '{}' is not key=value", assignment));
    return {{trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1))}};
}

std::string config_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : to_key_values(cfg)) out += k + "=" + v + "\n";
    return out;
}

std::string architecture_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [k, v] : to_key_values(cfg))
        if (k.rfind("model.", 0) == 0 || k.rfind("disc.", 0) == 0) out += k + "=" + v + "\n";
    return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace ptsr
