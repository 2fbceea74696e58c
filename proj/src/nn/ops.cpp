#include "elp/nn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "elp/error.hpp"

namespace elp::nn {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

ConstMap view(const std::vector<double>& v, const Shape& s) {
    return ConstMap(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}

MutMap grad_view(Node& n) {
    auto g = n.grad_buffer();
    return MutMap(g.data(), static_cast<Eigen::Index>(n.shape.rows), static_cast<Eigen::Index>(n.shape.cols));
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw Error(ErrorKind::ShapeError, std::string(op) + ": incompatible shapes " + to_string(a) + " and " +
                                           to_string(b));
}

void verify_finite(const char* op, const std::vector<double>& v) {
    if (!check_numerics()) return;
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorKind::NumericsError, std::string(op) + " produced a non-finite value");
    }
}

// Wires a freshly computed value into the graph. The backward rule is kept
// only if some input needs a gradient.
Tensor make(const char* op, Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
            std::function<void(Node&)> backward) {
    verify_finite(op, value);
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->value = std::move(value);
    if (grad_enabled()) {
        for (const auto& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
    }
    if (node->requires_grad) {
        node->parents = std::move(parents);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
    const Shape out{a.rows(), b.cols()};
    std::vector<double> v(out.size());
    MutMap(v.data(), out.rows, out.cols).noalias() = view(a.node()->value, a.shape()) * view(b.node()->value, b.shape());
    return make("matmul", out, std::move(v), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto g = view(self.grad, self.shape);
        if (pa.requires_grad) grad_view(pa).noalias() += g * view(pb.value, pb.shape).transpose();
        if (pb.requires_grad) grad_view(pb).noalias() += view(pa.value, pa.shape).transpose() * g;
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) shape_error("matmul_nt", a.shape(), b.shape());
    const Shape out{a.rows(), b.rows()};
    std::vector<double> v(out.size());
    MutMap(v.data(), out.rows, out.cols).noalias() =
        view(a.node()->value, a.shape()) * view(b.node()->value, b.shape()).transpose();
    return make("matmul_nt", out, std::move(v), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const auto g = view(self.grad, self.shape);
        if (pa.requires_grad) grad_view(pa).noalias() += g * view(pb.value, pb.shape);
        if (pb.requires_grad) grad_view(pb).noalias() += g.transpose() * view(pa.value, pa.shape);
    });
}

Tensor transpose(const Tensor& a) {
    const Shape out{a.cols(), a.rows()};
    std::vector<double> v(out.size());
    MutMap(v.data(), out.rows, out.cols) = view(a.node()->value, a.shape()).transpose();
    return make("transpose", out, std::move(v), {a.node()}, [](Node& self) {
        grad_view(*self.parents[0]) += view(self.grad, self.shape).transpose();
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool broadcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
    if (!broadcast && a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
    const std::size_t rows = a.rows();
    const std::size_t cols = a.cols();
    std::vector<double> v(a.values().begin(), a.values().end());
    const auto bv = b.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = broadcast ? 0 : r * cols;
        for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] += bv[off + c];
    }
    return make("add", a.shape(), std::move(v), {a.node(), b.node()}, [broadcast, rows, cols](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto ga = pa.grad_buffer();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto gb = pb.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t off = broadcast ? 0 : r * cols;
                for (std::size_t c = 0; c < cols; ++c) gb[off + c] += self.grad[r * cols + c];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
    return make("sub", a.shape(), std::move(v), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
    return make("mul", a.shape(), std::move(v), {a.node(), b.node()}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> v(a.values().begin(), a.values().end());
    for (double& x : v) x *= s;
    return make("scale", a.shape(), std::move(v), {a.node()}, [s](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

Tensor elu(const Tensor& a, double alpha) {
    std::vector<double> v(a.size());
    const auto x = a.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] > 0.0 ? x[i] : alpha * std::expm1(x[i]);
    return make("elu", a.shape(), std::move(v), {a.node()}, [alpha](Node& self) {
        Node& p = *self.parents[0];
        auto g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = p.value[i] > 0.0 ? 1.0 : self.value[i] + alpha;
            g[i] += d * self.grad[i];
        }
    });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    if (gamma.shape() != Shape{1, cols}) shape_error("layernorm", x.shape(), gamma.shape());
    if (beta.shape() != Shape{1, cols}) shape_error("layernorm", x.shape(), beta.shape());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(rows);
    std::vector<double> v(x.size());
    const auto xv = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += xv[r * cols + c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = xv[r * cols + c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            xhat[i] = (xv[i] - mean) * inv_std[r];
            v[i] = xhat[i] * gv[c] + bv[c];
        }
    }
    return make("layernorm", x.shape(), std::move(v), {x.node(), gamma.node(), beta.node()},
                [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Node& self) {
                    Node& px = *self.parents[0];
                    Node& pg = *self.parents[1];
                    Node& pb = *self.parents[2];
                    const auto& dy = self.grad;
                    if (pg.requires_grad) {
                        auto g = pg.grad_buffer();
                        for (std::size_t i = 0; i < dy.size(); ++i) g[i % cols] += dy[i] * xhat[i];
                    }
                    if (pb.requires_grad) {
                        auto g = pb.grad_buffer();
                        for (std::size_t i = 0; i < dy.size(); ++i) g[i % cols] += dy[i];
                    }
                    if (px.requires_grad) {
                        auto g = px.grad_buffer();
                        const double n = static_cast<double>(cols);
                        for (std::size_t r = 0; r < rows; ++r) {
                            double mean_d = 0.0;
                            double mean_dx = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                const double d = dy[i] * pg.value[c];
                                mean_d += d;
                                mean_dx += d * xhat[i];
                            }
                            mean_d /= n;
                            mean_dx /= n;
                            for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                const double d = dy[i] * pg.value[c];
                                g[i] += inv_std[r] * (d - mean_d - xhat[i] * mean_dx);
                            }
                        }
                    }
                });
}

Tensor masked_softmax_lastdim(const Tensor& x, std::span<const std::size_t> active_cols) {
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    if (active_cols.size() != rows) {
        throw Error(ErrorKind::ShapeError, "masked_softmax: one active width per row required");
    }
    std::vector<std::size_t> active(active_cols.begin(), active_cols.end());
    std::vector<double> v(x.size(), 0.0);
    const auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t n = active[r];
        if (n == 0 || n > cols) throw Error(ErrorKind::ShapeError, "masked_softmax: active width out of range");
        const double* in = xv.data() + r * cols;
        double* out = v.data() + r * cols;
        const double mx = *std::max_element(in, in + n);
        double z = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            out[c] = std::exp(in[c] - mx);
            z += out[c];
        }
        for (std::size_t c = 0; c < n; ++c) out[c] /= z;
    }
    return make("softmax", x.shape(), std::move(v), {x.node()}, [active = std::move(active), cols](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < active.size(); ++r) {
            const double* y = self.value.data() + r * cols;
            const double* dy = self.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < active[r]; ++c) dot += y[c] * dy[c];
            for (std::size_t c = 0; c < active[r]; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
        }
    });
}

Tensor softmax_lastdim(const Tensor& x) {
    const std::vector<std::size_t> full(x.rows(), x.cols());
    return masked_softmax_lastdim(x, full);
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel) {
    if (kernel % 2 == 0) throw Error(ErrorKind::InvalidParam, "conv1d: kernel width must be odd");
    const std::size_t len = x.rows();
    const std::size_t cin = x.cols();
    if (weight.rows() != kernel * cin) shape_error("conv1d", x.shape(), weight.shape());
    const std::size_t cout = weight.cols();
    if (bias.defined() && bias.shape() != Shape{1, cout}) shape_error("conv1d", weight.shape(), bias.shape());
    const std::size_t pad = kernel / 2;
    const std::size_t width = kernel * cin;

    // im2col: row t holds taps x[t - pad .. t + pad], zero outside the sequence.
    std::vector<double> cols(len * width, 0.0);
    const auto xv = x.values();
    for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t k = 0; k < kernel; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            std::copy_n(xv.data() + src * static_cast<std::ptrdiff_t>(cin), cin, cols.data() + t * width + k * cin);
        }
    }
    const Shape out{len, cout};
    std::vector<double> v(out.size());
    MutMap ov(v.data(), out.rows, out.cols);
    ov.noalias() = ConstMap(cols.data(), len, width) * view(weight.node()->value, weight.shape());
    if (bias.defined()) ov.rowwise() += view(bias.node()->value, bias.shape()).row(0);

    std::vector<NodePtr> parents{x.node(), weight.node()};
    if (bias.defined()) parents.push_back(bias.node());
    return make("conv1d", out, std::move(v), std::move(parents),
                [cols = std::move(cols), len, cin, kernel, pad, width](Node& self) {
                    Node& px = *self.parents[0];
                    Node& pw = *self.parents[1];
                    const auto g = view(self.grad, self.shape);
                    if (pw.requires_grad) grad_view(pw).noalias() += ConstMap(cols.data(), len, width).transpose() * g;
                    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                        auto gb = self.parents[2]->grad_buffer();
                        for (std::size_t t = 0; t < len; ++t) {
                            for (std::size_t c = 0; c < gb.size(); ++c) gb[c] += g(t, c);
                        }
                    }
                    if (px.requires_grad) {
                        Mat dcols = g * view(pw.value, pw.shape).transpose();
                        auto gx = px.grad_buffer();
                        for (std::size_t t = 0; t < len; ++t) {
                            for (std::size_t k = 0; k < kernel; ++k) {
                                const std::ptrdiff_t src =
                                    static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
                                if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                                for (std::size_t c = 0; c < cin; ++c) {
                                    gx[static_cast<std::size_t>(src) * cin + c] += dcols(t, k * cin + c);
                                }
                            }
                        }
                    }
                });
}

Tensor maxpool1d(const Tensor& x, std::size_t window, std::size_t stride, std::size_t padding) {
    const std::size_t len = x.rows();
    const std::size_t cols = x.cols();
    if (window == 0 || stride == 0) throw Error(ErrorKind::InvalidParam, "maxpool1d: window and stride must be > 0");
    if (len + 2 * padding < window) throw Error(ErrorKind::ShapeError, "maxpool1d: sequence shorter than window");
    const std::size_t out_len = (len + 2 * padding - window) / stride + 1;
    std::vector<double> v(out_len * cols);
    std::vector<std::size_t> argmax(out_len * cols);
    const auto xv = x.values();
    for (std::size_t o = 0; o < out_len; ++o) {
        const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(padding);
        const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0));
        const std::size_t hi = std::min<std::size_t>(len, static_cast<std::size_t>(start + static_cast<std::ptrdiff_t>(window)));
        if (lo >= hi) throw Error(ErrorKind::ShapeError, "maxpool1d: window lies entirely in padding");
        for (std::size_t c = 0; c < cols; ++c) {
            std::size_t best = lo;
            for (std::size_t t = lo + 1; t < hi; ++t) {
                if (xv[t * cols + c] > xv[best * cols + c]) best = t;
            }
            v[o * cols + c] = xv[best * cols + c];
            argmax[o * cols + c] = best * cols + c;
        }
    }
    return make("maxpool1d", {out_len, cols}, std::move(v), {x.node()}, [argmax = std::move(argmax)](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
    });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) throw Error(ErrorKind::InvalidParam, "dropout: p must lie in [0, 1)");
    if (!train || p == 0.0) return x;
    std::vector<double> mask(x.size());
    const double keep = 1.0 / (1.0 - p);
    for (double& m : mask) m = rng.uniform() >= p ? keep : 0.0;
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.values()[i] * mask[i];
    return make("dropout", x.shape(), std::move(v), {x.node()}, [mask = std::move(mask)](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * self.grad[i];
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw Error(ErrorKind::ShapeError, "concat_rows: no inputs");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts.front().shape(), p.shape());
        rows += p.rows();
        parents.push_back(p.node());
    }
    std::vector<double> v;
    v.reserve(rows * cols);
    for (const auto& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
    return make("concat_rows", {rows, cols}, std::move(v), std::move(parents), [](Node& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const std::size_t n = p->value.size();
            if (p->requires_grad) {
                auto g = p->grad_buffer();
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw Error(ErrorKind::ShapeError, "concat_cols: no inputs");
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.rows() != rows) shape_error("concat_cols", parts.front().shape(), p.shape());
        cols += p.cols();
        parents.push_back(p.node());
    }
    std::vector<double> v(rows * cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(p.values().data() + r * p.cols(), p.cols(), v.data() + r * cols + off);
        }
        off += p.cols();
    }
    return make("concat_cols", {rows, cols}, std::move(v), std::move(parents), [rows, cols](Node& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            const std::size_t pc = p->shape.cols;
            if (p->requires_grad) {
                auto g = p->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += self.grad[r * cols + off + c];
                }
            }
            off += pc;
        }
    });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    if (begin > end || end > x.rows()) {
        throw Error(ErrorKind::ShapeError, "slice_rows: range out of bounds for " + to_string(x.shape()));
    }
    const std::size_t cols = x.cols();
    std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          x.values().begin() + static_cast<std::ptrdiff_t>(end * cols));
    return make("slice_rows", {end - begin, cols}, std::move(v), {x.node()}, [begin, cols](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    if (begin > end || end > x.cols()) {
        throw Error(ErrorKind::ShapeError, "slice_cols: range out of bounds for " + to_string(x.shape()));
    }
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    const std::size_t w = end - begin;
    std::vector<double> v(rows * w);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.values().data() + r * cols + begin, w, v.data() + r * w);
    return make("slice_cols", {rows, w}, std::move(v), {x.node()}, [rows, cols, begin, w](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += self.grad[r * w + c];
        }
    });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    const std::size_t cols = x.cols();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> v(idx.size() * cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x.rows()) throw Error(ErrorKind::ShapeError, "gather_rows: index out of range");
        std::copy_n(x.values().data() + idx[i] * cols, cols, v.data() + i * cols);
    }
    const Shape out{idx.size(), cols};
    return make("gather_rows", out, std::move(v), {x.node()}, [idx = std::move(idx), cols](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t c = 0; c < cols; ++c) g[idx[i] * cols + c] += self.grad[i * cols + c];
        }
    });
}

Tensor merge_rows(const Tensor& base, const Tensor& rows, std::span<const std::size_t> at) {
    const std::size_t cols = base.cols();
    if (rows.cols() != cols || rows.rows() != at.size()) shape_error("merge_rows", base.shape(), rows.shape());
    std::vector<std::size_t> idx(at.begin(), at.end());
    std::vector<char> replaced(base.rows(), 0);
    std::vector<double> v(base.values().begin(), base.values().end());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= base.rows() || replaced[idx[i]]) {
            throw Error(ErrorKind::InvalidInput, "merge_rows: indices must be distinct and in range");
        }
        replaced[idx[i]] = 1;
        std::copy_n(rows.values().data() + i * cols, cols, v.data() + idx[i] * cols);
    }
    return make("merge_rows", base.shape(), std::move(v), {base.node(), rows.node()},
                [idx = std::move(idx), replaced = std::move(replaced), cols](Node& self) {
                    Node& pb = *self.parents[0];
                    Node& pr = *self.parents[1];
                    if (pb.requires_grad) {
                        auto g = pb.grad_buffer();
                        for (std::size_t r = 0; r < replaced.size(); ++r) {
                            if (replaced[r]) continue;
                            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r * cols + c];
                        }
                    }
                    if (pr.requires_grad) {
                        auto g = pr.grad_buffer();
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                            for (std::size_t c = 0; c < cols; ++c) g[i * cols + c] += self.grad[idx[i] * cols + c];
                        }
                    }
                });
}

Tensor mean_rows(const Tensor& x) {
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    if (rows == 0) throw Error(ErrorKind::ShapeError, "mean_rows: no rows");
    std::vector<double> v(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) v[c] += x.values()[r * cols + c];
    }
    for (double& e : v) e /= static_cast<double>(rows);
    return make("mean_rows", {1, cols}, std::move(v), {x.node()}, [rows, cols](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c] * inv;
        }
    });
}

Tensor prefix_mean_rows(const Tensor& x) {
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    std::vector<double> v(x.size());
    std::vector<double> acc(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            acc[c] += x.values()[r * cols + c];
            v[r * cols + c] = acc[c] / static_cast<double>(r + 1);
        }
    }
    return make("prefix_mean_rows", x.shape(), std::move(v), {x.node()}, [rows, cols](Node& self) {
        // d x[r] = sum_{i >= r} dy[i] / (i + 1), accumulated from the end.
        auto g = self.parents[0]->grad_buffer();
        std::vector<double> tail(cols, 0.0);
        for (std::size_t r = rows; r-- > 0;) {
            for (std::size_t c = 0; c < cols; ++c) {
                tail[c] += self.grad[r * cols + c] / static_cast<double>(r + 1);
                g[r * cols + c] += tail[c];
            }
        }
    });
}

Tensor broadcast_rows(const Tensor& row, std::size_t n) {
    if (row.rows() != 1) throw Error(ErrorKind::ShapeError, "broadcast_rows: expected a single row");
    const std::size_t cols = row.cols();
    std::vector<double> v(n * cols);
    for (std::size_t r = 0; r < n; ++r) std::copy_n(row.values().data(), cols, v.data() + r * cols);
    return make("broadcast_rows", {n, cols}, std::move(v), {row.node()}, [n, cols](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
        }
    });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make("sum", {1, 1}, {s}, {x.node()}, [](Node& self) {
        auto g = self.parents[0]->grad_buffer();
        for (double& e : g) e += self.grad[0];
    });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) shape_error("mse_loss", pred.shape(), target.shape());
    if (pred.size() == 0) throw Error(ErrorKind::ShapeError, "mse_loss: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred.values()[i] - target.values()[i];
        acc += r * r;
    }
    const double n = static_cast<double>(pred.size());
    return make("mse_loss", {1, 1}, {acc / n}, {pred.node(), target.node()}, [n](Node& self) {
        Node& pp = *self.parents[0];
        Node& pt = *self.parents[1];
        const double k = 2.0 * self.grad[0] / n;
        if (pp.requires_grad) {
            auto g = pp.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += k * (pp.value[i] - pt.value[i]);
        }
        if (pt.requires_grad) {
            auto g = pt.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= k * (pp.value[i] - pt.value[i]);
        }
    });
}

}  // namespace elp::nn
