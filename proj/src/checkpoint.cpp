#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "ptsr/training.hpp"

namespace fs = std::filesystem;

namespace ptsr {

namespace {

constexpr char kMagic[8] = {'P', 'T', 'S', 'R', 'C', 'K', 'P', 'T'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const Tensor& t) {
        str(name);
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) u64(d);
        bytes(t.data().data(), t.size() * sizeof(double));
    }
    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string data, std::string origin) : buf_(std::move(data)), origin_(std::move(origin)) {}
    void bytes(void* p, std::size_t n) {
        if (n > buf_.size() - pos_)
            throw CheckpointError(fmt::format("'{}' is truncated", origin_));
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        if (n > buf_.size() - pos_) throw CheckpointError(fmt::format("'{}' is truncated", origin_));
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::pair<std::string, Tensor> tensor() {
        std::string name = str();
        const std::uint32_t rank = u32();
        if (rank > 8) throw CheckpointError(fmt::format("'{}': tensor '{}' has rank {}", origin_, name, rank));
        Shape shape(rank);
        for (auto& d : shape) d = u64();
        const std::size_t n = shape_numel(shape);
        if (n > (buf_.size() - pos_) / sizeof(double))
            throw CheckpointError(fmt::format("'{}' is truncated", origin_));
        Tensor t(shape);
        bytes(t.data().data(), n * sizeof(double));
        return {std::move(name), std::move(t)};
    }
    std::size_t position() const { return pos_; }
    const std::string& data() const { return buf_; }

private:
    std::string buf_;
    std::string origin_;
    std::size_t pos_ = 0;
};

// Parameters and buffers of both networks, then Adam moments, in a fixed order.
std::vector<std::pair<std::string, Tensor*>> named_tensors(TrainState& st) {
    std::vector<std::pair<std::string, Tensor*>> out;
    ParamRefs g = st.gen.parameters(), d = st.disc.parameters();
    for (Parameter* p : g) out.emplace_back(p->name, &p->value);
    for (Parameter* p : d) out.emplace_back(p->name, &p->value);
    auto moments = [&](const char* tag, const ParamRefs& ps, AdamMoments& m) {
        if (m.m.empty()) {  // optimizer not stepped yet; size before taking addresses
            for (const Parameter* p : ps) {
                if (!p->trainable) continue;
                m.m.emplace_back(p->value.shape());
                m.v.emplace_back(p->value.shape());
            }
        }
        std::size_t i = 0;
        for (const Parameter* p : ps) {
            if (!p->trainable) continue;
            out.emplace_back(fmt::format("{}.m:{}", tag, p->name), &m.m.at(i));
            out.emplace_back(fmt::format("{}.v:{}", tag, p->name), &m.v.at(i));
            ++i;
        }
    };
    moments("adam_g", g, st.adam_g);
    moments("adam_d", d, st.adam_d);
    return out;
}

std::string differing_keys(const std::string& a, const std::string& b) {
    const auto ka = parse_config_text(a), kb = parse_config_text(b);
    std::string out;
    for (const auto& [k, v] : ka) {
        const auto it = kb.find(k);
        const std::string other = it == kb.end() ? "<missing>" : it->second;
        if (other != v) out += fmt::format("{}{} ({} vs {})", out.empty() ? "" : ", ", k, v, other);
    }
    return out;
}

}  // namespace

void save_checkpoint(const TrainState& cst, const fs::path& path) {
    auto& st = const_cast<TrainState&>(cst);  // unstepped moment slots are sized for writing, then dropped again
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    const std::string text = config_text(st.config);
    w.u64(fnv1a64(text));
    w.str(text);
    w.u64(fnv1a64(architecture_text(st.config)));
    w.u64(st.epoch);
    w.u64(st.epoch_step);
    w.u64(st.step);
    w.f64(st.lr);
    w.f64(st.best_val);
    w.u64(st.since_improvement);
    w.u64(st.triggers);
    w.u64(st.adam_g.t);
    w.u64(st.adam_d.t);
    std::ostringstream rng;
    rng << st.rng;
    w.str(rng.str());
    const auto tensors = named_tensors(st);
    w.u64(tensors.size());
    for (const auto& [name, t] : tensors) w.tensor(name, *t);
    w.u64(fnv1a64(w.buffer()));
    if (st.adam_g.t == 0) st.adam_g = {};
    if (st.adam_d.t == 0) st.adam_d = {};

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(fmt::format("cannot write '{}'", tmp.string()));
        out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
        if (!out) throw CheckpointError(fmt::format("short write to '{}'", tmp.string()));
    }
    fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path, const ExperimentConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(fmt::format("cannot open checkpoint '{}'", path.string()));
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < sizeof kMagic + 12 || std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
        throw CheckpointError(fmt::format("'{}' is not a checkpoint", path.string()));
    {
        std::uint64_t stored;
        std::memcpy(&stored, data.data() + data.size() - 8, 8);
        if (stored != fnv1a64(data.substr(0, data.size() - 8)))
            throw CheckpointError(fmt::format("'{}' failed its checksum", path.string()));
    }
    Reader r(data.substr(0, data.size() - 8), path.string());
    char magic[8];
    r.bytes(magic, 8);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError(fmt::format("checkpoint version {} (this build reads {})", version,
                                          kCheckpointVersion));
    const std::uint64_t text_hash = r.u64();
    const std::string text = r.str();
    if (fnv1a64(text) != text_hash) throw CheckpointError("checkpoint config hash mismatch");
    const std::uint64_t arch_hash = r.u64();

    ExperimentConfig stored_cfg;
    try {
        stored_cfg = apply_key_values(ExperimentConfig{}, parse_config_text(text));
    } catch (const ConfigError& e) {
        throw CheckpointError(fmt::format("checkpoint config unreadable: {}", e.what()));
    }
    if (fnv1a64(architecture_text(stored_cfg)) != arch_hash)
        throw CheckpointError("checkpoint architecture hash mismatch");

    TrainState st = TrainState::create(expected ? *expected : stored_cfg);
    st.epoch = r.u64();
    st.epoch_step = r.u64();
    st.step = r.u64();
    st.lr = r.f64();
    st.best_val = r.f64();
    st.since_improvement = r.u64();
    st.triggers = r.u64();
    st.adam_g.t = r.u64();
    st.adam_d.t = r.u64();
    std::istringstream rng(r.str());
    rng >> st.rng;
    if (!rng) throw CheckpointError("checkpoint RNG state unreadable");

    const std::uint64_t count = r.u64();
    std::vector<std::pair<std::string, Tensor>> stored;
    for (std::uint64_t i = 0; i < count; ++i) stored.push_back(r.tensor());
    const auto slots = named_tensors(st);
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [n, t] : stored) by_name[n] = &t;
    for (const auto& [name, slot] : slots) {
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw CheckpointError(fmt::format(
                "shape mismatch: model tensor '{}' {} is absent from the checkpoint ({} stored, {} "
                "expected)",
                name, shape_str(slot->shape()), stored.size(), slots.size()));
        if (it->second->shape() != slot->shape())
            throw CheckpointError(fmt::format("shape mismatch for '{}': checkpoint {} vs model {}",
                                              name, shape_str(it->second->shape()),
                                              shape_str(slot->shape())));
        *slot = *it->second;
    }
    if (stored.size() != slots.size())
        throw CheckpointError(fmt::format("shape mismatch: checkpoint holds {} tensors, model {}",
                                          stored.size(), slots.size()));
    if (expected && architecture_text(*expected) != architecture_text(stored_cfg))
        throw CheckpointError(fmt::format("config mismatch: {}",
                                          differing_keys(architecture_text(stored_cfg),
                                                         architecture_text(*expected))));
    if (st.adam_g.t == 0) st.adam_g = {};
    if (st.adam_d.t == 0) st.adam_d = {};
    return st;
}

}  // namespace ptsr
