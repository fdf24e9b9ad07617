#include "ptsr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

#include "ptsr/kernels.hpp"

namespace ptsr::ad {

namespace {

thread_local bool t_grad_enabled = true;

void require(bool ok, const char* op, const Shape& a, const Shape& b) {
    if (!ok) {
        throw ShapeError(
            fmt::format("{}: incompatible shapes {} and {}", op, shape_str(a), shape_str(b)));
    }
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
    if (v.value().rank() != rank) {
        throw ShapeError(fmt::format("{}: expected rank {}, got {}", op, rank,
                                     shape_str(v.shape())));
    }
}

// Creates a result node; parents/backward are kept only when some parent
// needs a gradient and recording is enabled.
Var make_node(Tensor value, std::initializer_list<Var> parents,
              std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (t_grad_enabled) {
        bool any = false;
        for (const Var& p : parents) any = any || p.requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Var& p : parents) node->parents.push_back(p.ptr());
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Var(std::move(node));
}

Var make_node_list(Tensor value, std::span<const Var> parents,
                   std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (t_grad_enabled) {
        bool any = false;
        for (const Var& p : parents) any = any || p.requires_grad();
        if (any) {
            node->requires_grad = true;
            for (const Var& p : parents) node->parents.push_back(p.ptr());
            node->backward_fn = std::move(backward_fn);
        }
    }
    return Var(std::move(node));
}

inline bool wants(const std::shared_ptr<Node>& n) { return n->requires_grad; }

Tensor scalar(double v) { return Tensor({1}, v); }

// Patch permutation: seq[j] = image[index[j]].
std::vector<std::size_t> patch_index(std::size_t h, std::size_t w, std::size_t ch,
                                     std::size_t k) {
    const std::size_t gr = h / k, gc = w / k, d = k * k * ch;
    std::vector<std::size_t> idx(h * w * ch);
    for (std::size_t pr = 0; pr < gr; ++pr)
        for (std::size_t pc = 0; pc < gc; ++pc) {
            const std::size_t row = pr * gc + pc;
            for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx)
                    for (std::size_t c = 0; c < ch; ++c)
                        idx[row * d + (dy * k + dx) * ch + c] =
                            ((pr * k + dy) * w + (pc * k + dx)) * ch + c;
        }
    return idx;
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
}

Tensor Var::grad() const {
    if (node_->grad.shape() == node_->value.shape()) return node_->grad;
    return Tensor(node_->value.shape());
}

bool grad_enabled() noexcept { return t_grad_enabled; }
NoGradGuard::NoGradGuard() noexcept : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var input(Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad && t_grad_enabled;
    return Var(std::move(node));
}

Var param(Parameter& p) {
    auto node = std::make_shared<Node>();
    node->value = p.value;
    if (t_grad_enabled && p.trainable) {
        node->requires_grad = true;
        node->param = &p;
    }
    return Var(std::move(node));
}

void backward(const Var& output) {
    if (output.value().size() != 1) {
        throw ShapeError(fmt::format("backward() without seed needs a scalar, got {}",
                                     shape_str(output.shape())));
    }
    backward(output, Tensor(output.shape(), 1.0));
}

void backward(const Var& output, const Tensor& seed) {
    if (seed.shape() != output.shape()) {
        throw ShapeError("backward seed shape does not match output");
    }
    if (!output.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(&output.node(), 0);
    seen.insert(&output.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    Tensor& g = output.node().grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.shape() == n->value.shape()) n->backward_fn(*n);
    }
    for (Node* n : order) {
        if (n->param && n->grad.shape() == n->value.shape()) {
            Tensor& pg = n->param->grad;
            if (pg.shape() != n->value.shape()) pg = Tensor(n->value.shape());
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n->grad[i];
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "add", a.shape(), b.shape());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    auto pa = a.ptr(), pb = b.ptr();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
        for (auto* p : {pa.get(), pb.get()}) {
            if (!p->requires_grad) continue;
            Tensor& g = p->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "sub", a.shape(), b.shape());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    auto pa = a.ptr(), pb = b.ptr();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (wants(pa)) {
            Tensor& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(pb)) {
            Tensor& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    auto pa = a.ptr(), pb = b.ptr();
    return make_node(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (wants(pa)) {
            Tensor& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (wants(pb)) {
            Tensor& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.data()) v *= s;
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, s](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.data()) v += s;
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var gelu(const Var& a) {
    Tensor out(a.shape());
    kernels::gelu(a.value().data(), out.data());
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa](Node& self) {
        kernels::gelu_backward(pa->value.data(), self.grad.data(), pa->grad_buffer().data());
    });
}

Var sigmoid(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = self.value[i];
            g[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a.value();
    for (double& v : out.data()) v = std::clamp(v, lo, hi);
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, lo, hi](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = pa->value[i];
            if (x >= lo && x <= hi) g[i] += self.grad[i];
        }
    });
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var dropout(const Var& a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
    auto mask = std::make_shared<std::vector<double>>(a.value().size());
    std::bernoulli_distribution keep(1.0 - p);
    const double s = 1.0 / (1.0 - p);
    for (double& m : *mask) m = keep(rng) ? s : 0.0;
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, mask](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    });
}

// ---------------------------------------------------------------------------
// matrices
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t n = a.value().rows(), m = a.value().cols(), p = b.value().cols();
    require(b.value().rows() == m, "matmul", a.shape(), b.shape());
    Tensor out({n, p});
    kernels::matmul(a.value().data(), b.value().data(), out.data(), {n, m, p});
    auto pa = a.ptr(), pb = b.ptr();
    return make_node(std::move(out), {a, b}, [pa, pb, n, m, p](Node& self) {
        if (wants(pa))  // dA = dC * B^T
            kernels::matmul_nt_acc(self.grad.data(), pb->value.data(),
                                   pa->grad_buffer().data(), {n, p, m});
        if (wants(pb))  // dB = A^T * dC
            kernels::matmul_tn_acc(pa->value.data(), self.grad.data(),
                                   pb->grad_buffer().data(), n, m, p);
    });
}

Var transpose(const Var& a) {
    require_rank(a, 2, "transpose");
    const std::size_t r = a.value().rows(), c = a.value().cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, r, c](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g.at(i, j) += self.grad.at(j, i);
    });
}

Var add_row(const Var& a, const Var& b) {
    require_rank(a, 2, "add_row");
    const std::size_t n = a.value().rows(), d = a.value().cols();
    require(b.value().size() == d, "add_row", a.shape(), b.shape());
    Tensor out = a.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) += b.value()[j];
    auto pa = a.ptr(), pb = b.ptr();
    return make_node(std::move(out), {a, b}, [pa, pb, n, d](Node& self) {
        if (wants(pa)) {
            Tensor& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants(pb)) {
            Tensor& g = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) g[j] += self.grad.at(i, j);
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_row(matmul(x, w), b); }

Var softmax_rows(const Var& a) {
    require_rank(a, 2, "softmax_rows");
    const std::size_t r = a.value().rows(), c = a.value().cols();
    Tensor out(a.shape());
    kernels::softmax_rows(a.value().data(), out.data(), r, c);
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, r, c](Node& self) {
        kernels::softmax_rows_backward(self.value.data(), self.grad.data(),
                                       pa->grad_buffer().data(), r, c);
    });
}

Var layernorm_rows(const Var& a, double eps) {
    require_rank(a, 2, "layernorm_rows");
    const std::size_t r = a.value().rows(), c = a.value().cols();
    Tensor out(a.shape());
    auto inv_std = std::make_shared<std::vector<double>>(r);
    kernels::layernorm_rows(a.value().data(), out.data(), *inv_std, r, c, eps);
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, inv_std, r, c](Node& self) {
        kernels::layernorm_rows_backward(self.value.data(), *inv_std, self.grad.data(),
                                         pa->grad_buffer().data(), r, c);
    });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t width) {
    require_rank(a, 2, "slice_cols");
    const std::size_t r = a.value().rows(), c = a.value().cols();
    if (start + width > c) {
        throw ShapeError(fmt::format("slice_cols [{}, {}) out of range for {} columns", start,
                                     start + width, c));
    }
    Tensor out({r, width});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < width; ++j) out.at(i, j) = a.value().at(i, start + j);
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, r, start, width](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < width; ++j) g.at(i, start + j) += self.grad.at(i, j);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = parts[0].value().rows();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank(p, 2, "concat_cols");
        require(p.value().rows() == r, "concat_cols", parts[0].shape(), p.shape());
        total += p.value().cols();
    }
    Tensor out({r, total});
    std::size_t off = 0;
    for (const Var& p : parts) {
        const std::size_t w = p.value().cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) out.at(i, off + j) = p.value().at(i, j);
        off += w;
    }
    std::vector<std::shared_ptr<Node>> ps;
    for (const Var& p : parts) ps.push_back(p.ptr());
    return make_node_list(std::move(out), parts, [ps, r](Node& self) {
        std::size_t off = 0;
        for (const auto& p : ps) {
            const std::size_t w = p->value.cols();
            if (p->requires_grad) {
                Tensor& g = p->grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < w; ++j) g.at(i, j) += self.grad.at(i, off + j);
            }
            off += w;
        }
    });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
    require_rank(a, 2, "slice_rows");
    const std::size_t r = a.value().rows(), c = a.value().cols();
    if (start + count > r) {
        throw ShapeError(fmt::format("slice_rows [{}, {}) out of range for {} rows", start,
                                     start + count, r));
    }
    Tensor out({count, c});
    std::copy_n(a.value().data().begin() + static_cast<std::ptrdiff_t>(start * c), count * c,
                out.data().begin());
    auto pa = a.ptr();
    return make_node(std::move(out), {a}, [pa, start, c](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * c + i] += self.grad[i];
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t c = parts[0].value().cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank(p, 2, "concat_rows");
        require(p.value().cols() == c, "concat_rows", parts[0].shape(), p.shape());
        total += p.value().rows();
    }
    Tensor out({total, c});
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += p.value().size();
    }
    std::vector<std::shared_ptr<Node>> ps;
    for (const Var& p : parts) ps.push_back(p.ptr());
    return make_node_list(std::move(out), parts, [ps](Node& self) {
        std::size_t off = 0;
        for (const auto& p : ps) {
            if (p->requires_grad) {
                Tensor& g = p->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[off + i];
            }
            off += p->value.size();
        }
    });
}

// ---------------------------------------------------------------------------
// images
// ---------------------------------------------------------------------------

Var split_patches(const Var& image, std::size_t k) {
    require_rank(image, 3, "split_patches");
    const std::size_t h = image.shape()[0], w = image.shape()[1], ch = image.shape()[2];
    if (k == 0) throw ShapeError("split_patches: patch size must be positive");
    if (h % k != 0)
        throw ShapeError(fmt::format("image height {} is not divisible by patch size {}", h, k));
    if (w % k != 0)
        throw ShapeError(fmt::format("image width {} is not divisible by patch size {}", w, k));
    const std::size_t n = (h / k) * (w / k), d = k * k * ch;
    auto idx = std::make_shared<std::vector<std::size_t>>(patch_index(h, w, ch, k));
    Tensor out({n, d});
    for (std::size_t j = 0; j < idx->size(); ++j) out[j] = image.value()[(*idx)[j]];
    auto pa = image.ptr();
    return make_node(std::move(out), {image}, [pa, idx](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t j = 0; j < idx->size(); ++j) g[(*idx)[j]] += self.grad[j];
    });
}

Var merge_patches(const Var& seq, std::size_t height, std::size_t width, std::size_t k) {
    require_rank(seq, 2, "merge_patches");
    if (k == 0 || height % k != 0 || width % k != 0) {
        throw ShapeError(fmt::format("merge_patches: {}x{} is not a multiple of patch size {}",
                                     height, width, k));
    }
    const std::size_t n = seq.value().rows(), d = seq.value().cols();
    const std::size_t expected_n = (height / k) * (width / k);
    if (n != expected_n || d % (k * k) != 0) {
        throw ShapeError(fmt::format(
            "merge_patches: sequence {} does not tile a {}x{} image with k={} (expected {} rows)",
            shape_str(seq.shape()), height, width, k, expected_n));
    }
    const std::size_t ch = d / (k * k);
    auto idx = std::make_shared<std::vector<std::size_t>>(patch_index(height, width, ch, k));
    Tensor out({height, width, ch});
    for (std::size_t j = 0; j < idx->size(); ++j) out[(*idx)[j]] = seq.value()[j];
    auto pa = seq.ptr();
    return make_node(std::move(out), {seq}, [pa, idx](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t j = 0; j < idx->size(); ++j) g[j] += self.grad[(*idx)[j]];
    });
}

Var resize_bilinear(const Var& image, std::size_t out_h, std::size_t out_w) {
    require_rank(image, 3, "resize_bilinear");
    const std::size_t h = image.shape()[0], w = image.shape()[1], ch = image.shape()[2];
    if (h == 0 || w == 0 || out_h == 0 || out_w == 0)
        throw ShapeError("resize_bilinear: empty image");
    Tensor out({out_h, out_w, ch});
    kernels::resample_bilinear(image.value().data(), out.data(), h, w, out_h, out_w, ch);
    auto pa = image.ptr();
    return make_node(std::move(out), {image}, [pa, h, w, out_h, out_w, ch](Node& self) {
        kernels::resample_bilinear_adjoint(self.grad.data(), pa->grad_buffer().data(), h, w,
                                           out_h, out_w, ch);
    });
}

Var concat_channels(const Var& a, const Var& b) {
    require_rank(a, 3, "concat_channels");
    require_rank(b, 3, "concat_channels");
    const std::size_t h = a.shape()[0], w = a.shape()[1];
    require(b.shape()[0] == h && b.shape()[1] == w, "concat_channels", a.shape(), b.shape());
    const std::size_t ca = a.shape()[2], cb = b.shape()[2], c = ca + cb;
    Tensor out({h, w, c});
    for (std::size_t px = 0; px < h * w; ++px) {
        for (std::size_t i = 0; i < ca; ++i) out[px * c + i] = a.value()[px * ca + i];
        for (std::size_t i = 0; i < cb; ++i) out[px * c + ca + i] = b.value()[px * cb + i];
    }
    auto pa = a.ptr(), pb = b.ptr();
    return make_node(std::move(out), {a, b}, [pa, pb, h, w, ca, cb, c](Node& self) {
        if (wants(pa)) {
            Tensor& g = pa->grad_buffer();
            for (std::size_t px = 0; px < h * w; ++px)
                for (std::size_t i = 0; i < ca; ++i) g[px * ca + i] += self.grad[px * c + i];
        }
        if (wants(pb)) {
            Tensor& g = pb->grad_buffer();
            for (std::size_t px = 0; px < h * w; ++px)
                for (std::size_t i = 0; i < cb; ++i) g[px * cb + i] += self.grad[px * c + ca + i];
        }
    });
}

Var crop(const Var& image, std::size_t y0, std::size_t x0, std::size_t height,
         std::size_t width) {
    require_rank(image, 3, "crop");
    const std::size_t h = image.shape()[0], w = image.shape()[1], ch = image.shape()[2];
    if (y0 + height > h || x0 + width > w) {
        throw ShapeError(fmt::format("crop {}x{} at ({}, {}) exceeds image {}x{}", height, width,
                                     y0, x0, h, w));
    }
    Tensor out({height, width, ch});
    for (std::size_t y = 0; y < height; ++y)
        std::copy_n(image.value().data().begin() +
                        static_cast<std::ptrdiff_t>(((y0 + y) * w + x0) * ch),
                    width * ch, out.data().begin() + static_cast<std::ptrdiff_t>(y * width * ch));
    auto pa = image.ptr();
    return make_node(std::move(out), {image}, [pa, y0, x0, height, width, w, ch](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t i = 0; i < width * ch; ++i)
                g[((y0 + y) * w + x0) * ch + i] += self.grad[y * width * ch + i];
    });
}

Var assemble(std::span<const Var> tiles, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0 || tiles.size() != rows * cols)
        throw ShapeError(fmt::format("assemble: {} tiles for a {}x{} grid", tiles.size(), rows, cols));
    for (const Var& t : tiles) require_rank(t, 3, "assemble");
    const std::size_t ch = tiles[0].shape()[2];
    std::vector<std::size_t> row_h(rows), col_w(cols), row_off(rows + 1, 0), col_off(cols + 1, 0);
    for (std::size_t r = 0; r < rows; ++r) row_h[r] = tiles[r * cols].shape()[0];
    for (std::size_t c = 0; c < cols; ++c) col_w[c] = tiles[c].shape()[1];
    for (std::size_t r = 0; r < rows; ++r) row_off[r + 1] = row_off[r] + row_h[r];
    for (std::size_t c = 0; c < cols; ++c) col_off[c + 1] = col_off[c] + col_w[c];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const Shape& s = tiles[r * cols + c].shape();
            if (s[0] != row_h[r] || s[1] != col_w[c] || s[2] != ch)
                throw ShapeError(fmt::format("assemble: tile ({}, {}) has shape {}", r, c,
                                             shape_str(s)));
        }
    const std::size_t h = row_off[rows], w = col_off[cols];
    Tensor out({h, w, ch});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const Tensor& t = tiles[r * cols + c].value();
            for (std::size_t y = 0; y < row_h[r]; ++y)
                std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(y * col_w[c] * ch),
                            col_w[c] * ch,
                            out.data().begin() + static_cast<std::ptrdiff_t>(
                                                     ((row_off[r] + y) * w + col_off[c]) * ch));
        }
    std::vector<std::shared_ptr<Node>> ps;
    for (const Var& t : tiles) ps.push_back(t.ptr());
    return make_node_list(std::move(out), tiles,
                          [ps, rows, cols, row_off, col_off, w, ch](Node& self) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const auto& p = ps[r * cols + c];
                if (!p->requires_grad) continue;
                Tensor& g = p->grad_buffer();
                const std::size_t th = row_off[r + 1] - row_off[r];
                const std::size_t tw = col_off[c + 1] - col_off[c];
                for (std::size_t y = 0; y < th; ++y)
                    for (std::size_t i = 0; i < tw * ch; ++i)
                        g[y * tw * ch + i] +=
                            self.grad[((row_off[r] + y) * w + col_off[c]) * ch + i];
            }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    auto pa = a.ptr();
    return make_node(scalar(s), {a}, [pa](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (double& v : g.data()) v += self.grad[0];
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var abs_sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += std::abs(v);
    auto pa = a.ptr();
    return make_node(scalar(s), {a}, [pa](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = pa->value[i];
            g[i] += self.grad[0] * static_cast<double>((x > 0.0) - (x < 0.0));
        }
    });
}

Var sum_squares(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v * v;
    auto pa = a.ptr();
    return make_node(scalar(s), {a}, [pa](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[0] * pa->value[i];
    });
}

Var l2_norm(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v * v;
    const double norm = std::sqrt(s);
    auto pa = a.ptr();
    return make_node(scalar(norm), {a}, [pa, norm](Node& self) {
        if (norm == 0.0) return;  // subgradient 0 at the origin
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * pa->value[i] / norm;
    });
}

Var bce_prob(const Var& p, double target, double eps) {
    const std::size_t n = p.value().size();
    double s = 0.0;
    for (double v : p.value().data()) {
        const double q = std::clamp(v, eps, 1.0 - eps);
        s += -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
    }
    auto pa = p.ptr();
    return make_node(scalar(s / static_cast<double>(n)), {p}, [pa, target, eps, n](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            const double v = pa->value[i];
            if (v < eps || v > 1.0 - eps) continue;
            const double d = -(target / v) + (1.0 - target) / (1.0 - v);
            g[i] += self.grad[0] * d / static_cast<double>(n);
        }
    });
}

Var bce_logits(const Var& z, double target) {
    const std::size_t n = z.value().size();
    double s = 0.0;
    for (double x : z.value().data())
        s += std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
    auto pa = z.ptr();
    return make_node(scalar(s / static_cast<double>(n)), {z}, [pa, target, n](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-pa->value[i]));
            g[i] += self.grad[0] * (sig - target) / static_cast<double>(n);
        }
    });
}

}  // namespace ptsr::ad
