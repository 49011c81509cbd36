#include "sparsepaint/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "sparsepaint/parallel.hpp"

namespace sparsepaint::ad {

Tensor* Node::grad_sink(Node* input) {
    if (!input->grad_wanted) return nullptr;
    if (!input->grad_ready) {
        input->grad.reset(input->value.shape);
        input->grad_ready = true;
    }
    return &input->grad;
}

namespace {

struct InputNode : Node {
    const char* kind() const override { return "input"; }
};

struct ParameterNode : Node {
    ParameterNode() { trainable = true; }
    const char* kind() const override { return "parameter"; }
};

struct Conv2dNode : Node {
    Node *x, *w, *b;
    int stride, spacing, pad;

    Conv2dNode(Node* x_, Node* w_, Node* b_, int dilation, int stride_)
        : x(x_), w(w_), b(b_), stride(stride_), spacing(std::max(dilation, 1)), pad(2 * spacing) {
        const Shape xs = x->value.shape, ws = w->value.shape;
        if (ws.h != 5 || ws.w != 5) throw dimension_error("conv kernel must be 5x5");
        if (ws.c != xs.c) throw dimension_error("conv channel mismatch");
        if (stride != 1 && stride != 2) throw dimension_error("conv stride must be 1 or 2");
        if (dilation < 0) throw dimension_error("conv dilation must be non-negative");
        const int span = 4 * spacing + 1;
        const int oh = (xs.h + 2 * pad - span) / stride + 1;
        const int ow = (xs.w + 2 * pad - span) / stride + 1;
        if (oh < 1 || ow < 1) throw dimension_error("conv output would be empty");
        if (b) {
            const Shape bs = b->value.shape;
            if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1) {
                throw dimension_error("conv bias shape mismatch");
            }
        }
        inputs = {x, w};
        if (b) inputs.push_back(b);
        value.reset({xs.n, ws.n, oh, ow});
    }

    const char* kind() const override { return "conv2d"; }

    void forward() override {
        const Tensor& X = x->value;
        const Tensor& W = w->value;
        const Shape xs = X.shape;
        const int oc = W.shape.n, ic = W.shape.c;
        const int oh = value.shape.h, ow = value.shape.w;
        const double* bias = b ? b->value.data.data() : nullptr;
        parallel_for(static_cast<std::int64_t>(xs.n) * oc, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / oc), co = static_cast<int>(t % oc);
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        double acc = bias ? bias[co] : 0.0;
                        for (int ci = 0; ci < ic; ++ci) {
                            const double* xp = &X.at(n, ci, 0, 0);
                            const double* wp = &W.at(co, ci, 0, 0);
                            for (int ky = 0; ky < 5; ++ky) {
                                const int iy = oy * stride - pad + ky * spacing;
                                if (iy < 0 || iy >= xs.h) continue;
                                for (int kx = 0; kx < 5; ++kx) {
                                    const int ix = ox * stride - pad + kx * spacing;
                                    if (ix < 0 || ix >= xs.w) continue;
                                    acc += wp[ky * 5 + kx] * xp[static_cast<std::size_t>(iy) * xs.w + ix];
                                }
                            }
                        }
                        value.at(n, co, oy, ox) = acc;
                    }
                }
            }
        });
    }

    void backward() override {
        const Tensor& X = x->value;
        const Tensor& W = w->value;
        const Shape xs = X.shape;
        const int oc = W.shape.n, ic = W.shape.c;
        const int oh = value.shape.h, ow = value.shape.w;

        if (Tensor* gx = grad_sink(x)) {
            parallel_for(static_cast<std::int64_t>(xs.n) * ic, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int n = static_cast<int>(t / ic), ci = static_cast<int>(t % ic);
                    for (int iy = 0; iy < xs.h; ++iy) {
                        for (int ix = 0; ix < xs.w; ++ix) {
                            double acc = 0.0;
                            for (int co = 0; co < oc; ++co) {
                                const double* wp = &W.at(co, ci, 0, 0);
                                const double* gp = &grad.at(n, co, 0, 0);
                                for (int ky = 0; ky < 5; ++ky) {
                                    const int ny = iy + pad - ky * spacing;
                                    if (ny < 0 || ny % stride != 0) continue;
                                    const int oy = ny / stride;
                                    if (oy >= oh) continue;
                                    for (int kx = 0; kx < 5; ++kx) {
                                        const int nx = ix + pad - kx * spacing;
                                        if (nx < 0 || nx % stride != 0) continue;
                                        const int ox = nx / stride;
                                        if (ox >= ow) continue;
                                        acc += wp[ky * 5 + kx] * gp[static_cast<std::size_t>(oy) * ow + ox];
                                    }
                                }
                            }
                            gx->at(n, ci, iy, ix) += acc;
                        }
                    }
                }
            });
        }
        if (Tensor* gw = grad_sink(w)) {
            parallel_for(static_cast<std::int64_t>(oc) * ic, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int co = static_cast<int>(t / ic), ci = static_cast<int>(t % ic);
                    for (int ky = 0; ky < 5; ++ky) {
                        for (int kx = 0; kx < 5; ++kx) {
                            double acc = 0.0;
                            for (int n = 0; n < xs.n; ++n) {
                                const double* xp = &X.at(n, ci, 0, 0);
                                const double* gp = &grad.at(n, co, 0, 0);
                                for (int oy = 0; oy < oh; ++oy) {
                                    const int iy = oy * stride - pad + ky * spacing;
                                    if (iy < 0 || iy >= xs.h) continue;
                                    for (int ox = 0; ox < ow; ++ox) {
                                        const int ix = ox * stride - pad + kx * spacing;
                                        if (ix < 0 || ix >= xs.w) continue;
                                        acc += gp[static_cast<std::size_t>(oy) * ow + ox] *
                                               xp[static_cast<std::size_t>(iy) * xs.w + ix];
                                    }
                                }
                            }
                            gw->at(co, ci, ky, kx) += acc;
                        }
                    }
                }
            });
        }
        if (b) {
            if (Tensor* gb = grad_sink(b)) {
                parallel_for(oc, [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t co = lo; co < hi; ++co) {
                        double acc = 0.0;
                        for (int n = 0; n < xs.n; ++n) {
                            const double* gp = &grad.at(n, static_cast<int>(co), 0, 0);
                            for (int i = 0; i < oh * ow; ++i) acc += gp[i];
                        }
                        gb->data[co] += acc;
                    }
                });
            }
        }
    }
};

struct TConv2dNode : Node {
    Node *x, *w, *b;
    int spacing, pad;

    TConv2dNode(Node* x_, Node* w_, Node* b_, int dilation)
        : x(x_), w(w_), b(b_), spacing(std::max(dilation, 1)), pad(2 * spacing) {
        const Shape xs = x->value.shape, ws = w->value.shape;
        if (ws.h != 5 || ws.w != 5) throw dimension_error("tconv kernel must be 5x5");
        if (ws.n != xs.c) throw dimension_error("tconv channel mismatch");
        if (dilation < 0) throw dimension_error("tconv dilation must be non-negative");
        if (b) {
            const Shape bs = b->value.shape;
            if (bs.n != 1 || bs.c != ws.c || bs.h != 1 || bs.w != 1) {
                throw dimension_error("tconv bias shape mismatch");
            }
        }
        inputs = {x, w};
        if (b) inputs.push_back(b);
        value.reset({xs.n, ws.c, xs.h, xs.w});
    }

    const char* kind() const override { return "tconv2d"; }

    void forward() override {
        const Tensor& X = x->value;
        const Tensor& W = w->value;
        const Shape xs = X.shape;
        const int ic = W.shape.n, oc = W.shape.c;
        const int h = xs.h, w2 = xs.w;
        const double* bias = b ? b->value.data.data() : nullptr;
        parallel_for(static_cast<std::int64_t>(xs.n) * oc, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / oc), co = static_cast<int>(t % oc);
                for (int y = 0; y < h; ++y) {
                    for (int xq = 0; xq < w2; ++xq) {
                        double acc = bias ? bias[co] : 0.0;
                        for (int ci = 0; ci < ic; ++ci) {
                            const double* xp = &X.at(n, ci, 0, 0);
                            const double* wp = &W.at(ci, co, 0, 0);
                            for (int ky = 0; ky < 5; ++ky) {
                                const int iy = y + pad - ky * spacing;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < 5; ++kx) {
                                    const int ix = xq + pad - kx * spacing;
                                    if (ix < 0 || ix >= w2) continue;
                                    acc += wp[ky * 5 + kx] * xp[static_cast<std::size_t>(iy) * w2 + ix];
                                }
                            }
                        }
                        value.at(n, co, y, xq) = acc;
                    }
                }
            }
        });
    }

    void backward() override {
        const Tensor& X = x->value;
        const Tensor& W = w->value;
        const Shape xs = X.shape;
        const int ic = W.shape.n, oc = W.shape.c;
        const int h = xs.h, w2 = xs.w;

        if (Tensor* gx = grad_sink(x)) {
            parallel_for(static_cast<std::int64_t>(xs.n) * ic, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int n = static_cast<int>(t / ic), ci = static_cast<int>(t % ic);
                    for (int y = 0; y < h; ++y) {
                        for (int xq = 0; xq < w2; ++xq) {
                            double acc = 0.0;
                            for (int co = 0; co < oc; ++co) {
                                const double* wp = &W.at(ci, co, 0, 0);
                                const double* gp = &grad.at(n, co, 0, 0);
                                for (int ky = 0; ky < 5; ++ky) {
                                    const int oy = y - pad + ky * spacing;
                                    if (oy < 0 || oy >= h) continue;
                                    for (int kx = 0; kx < 5; ++kx) {
                                        const int ox = xq - pad + kx * spacing;
                                        if (ox < 0 || ox >= w2) continue;
                                        acc += wp[ky * 5 + kx] * gp[static_cast<std::size_t>(oy) * w2 + ox];
                                    }
                                }
                            }
                            gx->at(n, ci, y, xq) += acc;
                        }
                    }
                }
            });
        }
        if (Tensor* gw = grad_sink(w)) {
            parallel_for(static_cast<std::int64_t>(ic) * oc, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int ci = static_cast<int>(t / oc), co = static_cast<int>(t % oc);
                    for (int ky = 0; ky < 5; ++ky) {
                        for (int kx = 0; kx < 5; ++kx) {
                            double acc = 0.0;
                            for (int n = 0; n < xs.n; ++n) {
                                const double* xp = &X.at(n, ci, 0, 0);
                                const double* gp = &grad.at(n, co, 0, 0);
                                for (int y = 0; y < h; ++y) {
                                    const int iy = y + pad - ky * spacing;
                                    if (iy < 0 || iy >= h) continue;
                                    for (int xq = 0; xq < w2; ++xq) {
                                        const int ix = xq + pad - kx * spacing;
                                        if (ix < 0 || ix >= w2) continue;
                                        acc += gp[static_cast<std::size_t>(y) * w2 + xq] *
                                               xp[static_cast<std::size_t>(iy) * w2 + ix];
                                    }
                                }
                            }
                            gw->at(ci, co, ky, kx) += acc;
                        }
                    }
                }
            });
        }
        if (b) {
            if (Tensor* gb = grad_sink(b)) {
                parallel_for(oc, [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t co = lo; co < hi; ++co) {
                        double acc = 0.0;
                        for (int n = 0; n < xs.n; ++n) {
                            const double* gp = &grad.at(n, static_cast<int>(co), 0, 0);
                            for (int i = 0; i < h * w2; ++i) acc += gp[i];
                        }
                        gb->data[co] += acc;
                    }
                });
            }
        }
    }
};

struct MaxPool2x2Node : Node {
    Node* x;
    std::vector<std::int64_t> argmax;

    explicit MaxPool2x2Node(Node* x_) : x(x_) {
        const Shape xs = x->value.shape;
        if (xs.h % 2 != 0 || xs.w % 2 != 0) {
            throw dimension_error("maxpool needs even height and width");
        }
        inputs = {x};
        value.reset({xs.n, xs.c, xs.h / 2, xs.w / 2});
        argmax.resize(static_cast<std::size_t>(value.shape.count()));
    }

    const char* kind() const override { return "maxpool2x2"; }

    void forward() override {
        const Tensor& X = x->value;
        const Shape xs = X.shape;
        const int oh = value.shape.h, ow = value.shape.w;
        parallel_for(static_cast<std::int64_t>(xs.n) * xs.c, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / xs.c), c = static_cast<int>(t % xs.c);
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        std::int64_t best_idx = -1;
                        double best = 0.0;
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const int iy = 2 * oy + dy, ix = 2 * ox + dx;
                                const std::int64_t idx =
                                    ((static_cast<std::int64_t>(n) * xs.c + c) * xs.h + iy) * xs.w + ix;
                                const double v = X.data[idx];
                                if (best_idx < 0 || v > best) { // first index wins ties
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        const std::int64_t o =
                            ((static_cast<std::int64_t>(n) * xs.c + c) * oh + oy) * ow + ox;
                        value.data[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        });
    }

    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            // Pool windows are disjoint, so distinct outputs touch distinct inputs.
            parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t o = lo; o < hi; ++o) gx->data[argmax[o]] += grad.data[o];
            });
        }
    }
};

struct Upsample2x2Node : Node {
    Node* x;

    explicit Upsample2x2Node(Node* x_) : x(x_) {
        const Shape xs = x->value.shape;
        inputs = {x};
        value.reset({xs.n, xs.c, xs.h * 2, xs.w * 2});
    }

    const char* kind() const override { return "upsample2x2"; }

    void forward() override {
        const Tensor& X = x->value;
        const Shape xs = X.shape;
        const int oh = value.shape.h, ow = value.shape.w;
        parallel_for(static_cast<std::int64_t>(xs.n) * xs.c, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / xs.c), c = static_cast<int>(t % xs.c);
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        value.at(n, c, oy, ox) = X.at(n, c, oy / 2, ox / 2);
                    }
                }
            }
        });
    }

    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const Shape xs = x->value.shape;
            parallel_for(xs.count(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) {
                    const int iw = xs.w;
                    const int ix = static_cast<int>(i % iw);
                    const int iy = static_cast<int>((i / iw) % xs.h);
                    const int c = static_cast<int>((i / (static_cast<std::int64_t>(iw) * xs.h)) % xs.c);
                    const int n = static_cast<int>(i / (static_cast<std::int64_t>(iw) * xs.h * xs.c));
                    double acc = 0.0;
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            acc += grad.at(n, c, 2 * iy + dy, 2 * ix + dx);
                        }
                    }
                    gx->data[i] += acc;
                }
            });
        }
    }
};

struct ConcatChannelsNode : Node {
    explicit ConcatChannelsNode(std::vector<Node*> xs) {
        if (xs.empty()) throw dimension_error("concat needs at least one input");
        const Shape first = xs[0]->value.shape;
        int channels = 0;
        for (Node* in : xs) {
            const Shape s = in->value.shape;
            if (s.n != first.n || s.h != first.h || s.w != first.w) {
                throw dimension_error("concat inputs must agree on batch and spatial dims");
            }
            channels += s.c;
        }
        inputs = std::move(xs);
        value.reset({first.n, channels, first.h, first.w});
    }

    const char* kind() const override { return "concat"; }

    void forward() override {
        const Shape os = value.shape;
        const std::int64_t plane = static_cast<std::int64_t>(os.h) * os.w;
        for (int n = 0; n < os.n; ++n) {
            int c0 = 0;
            for (Node* in : inputs) {
                const Shape s = in->value.shape;
                const double* src = &in->value.at(n, 0, 0, 0);
                double* dst = &value.at(n, c0, 0, 0);
                std::copy(src, src + plane * s.c, dst);
                c0 += s.c;
            }
        }
    }

    void backward() override {
        const Shape os = value.shape;
        const std::int64_t plane = static_cast<std::int64_t>(os.h) * os.w;
        int c0 = 0;
        for (Node* in : inputs) {
            const Shape s = in->value.shape;
            if (Tensor* gx = grad_sink(in)) {
                for (int n = 0; n < os.n; ++n) {
                    const double* src = &grad.at(n, c0, 0, 0);
                    double* dst = &gx->at(n, 0, 0, 0);
                    for (std::int64_t i = 0; i < plane * s.c; ++i) dst[i] += src[i];
                }
            }
            c0 += s.c;
        }
    }
};

struct EluNode : Node {
    Node* x;
    explicit EluNode(Node* x_) : x(x_) {
        inputs = {x};
        value.reset(x->value.shape);
    }
    const char* kind() const override { return "elu"; }
    void forward() override {
        const auto& in = x->value.data;
        parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                const double v = in[i];
                value.data[i] = v > 0.0 ? v : std::exp(v) - 1.0;
            }
        });
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const auto& in = x->value.data;
            parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) {
                    gx->data[i] += grad.data[i] * (in[i] > 0.0 ? 1.0 : std::exp(in[i]));
                }
            });
        }
    }
};

struct LeakyReluNode : Node {
    Node* x;
    double slope;
    LeakyReluNode(Node* x_, double slope_) : x(x_), slope(slope_) {
        inputs = {x};
        value.reset(x->value.shape);
    }
    const char* kind() const override { return "leaky_relu"; }
    void forward() override {
        const auto& in = x->value.data;
        parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                const double v = in[i];
                value.data[i] = v > 0.0 ? v : slope * v;
            }
        });
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const auto& in = x->value.data;
            parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) {
                    gx->data[i] += grad.data[i] * (in[i] > 0.0 ? 1.0 : slope);
                }
            });
        }
    }
};

struct HardSigmoidNode : Node {
    Node* x;
    explicit HardSigmoidNode(Node* x_) : x(x_) {
        inputs = {x};
        value.reset(x->value.shape);
    }
    const char* kind() const override { return "hard_sigmoid"; }
    void forward() override {
        const auto& in = x->value.data;
        parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) {
                value.data[i] = std::clamp(0.2 * in[i] + 0.5, 0.0, 1.0);
            }
        });
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const auto& in = x->value.data;
            parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) {
                    // Slope from the interior side on the closed interval.
                    const double d = (in[i] >= -2.5 && in[i] <= 2.5) ? 0.2 : 0.0;
                    gx->data[i] += grad.data[i] * d;
                }
            });
        }
    }
};

struct BinarizeNode : Node {
    Node* x;
    BinarizationMode mode;
    Rng* rng;

    BinarizeNode(Node* x_, BinarizationMode mode_, Rng* rng_) : x(x_), mode(mode_), rng(rng_) {
        if (mode != BinarizationMode::hard_rounding && rng == nullptr) {
            throw domain_error("stochastic binarization modes need a generator");
        }
        inputs = {x};
        value.reset(x->value.shape);
        straight_through = true;
    }

    const char* kind() const override { return "binarize"; }

    void forward() override {
        // Sequential on purpose: stochastic modes must draw in flat element
        // order so results are independent of the thread count.
        const auto& in = x->value.data;
        for (std::size_t i = 0; i < in.size(); ++i) {
            const double v = in[i];
            if (!(v >= 0.0 && v <= 1.0)) throw domain_error("binarize input outside [0,1]");
            switch (mode) {
                case BinarizationMode::hard_rounding:
                    value.data[i] = std::floor(v + 0.5);
                    break;
                case BinarizationMode::stochastic_rounding:
                    value.data[i] = rng->uniform() < v ? 1.0 : 0.0;
                    break;
                case BinarizationMode::additive_noise:
                    value.data[i] = std::floor(v + 0.5 * rng->uniform() + 0.5);
                    if (value.data[i] > 1.0) value.data[i] = 1.0;
                    break;
            }
        }
    }

    void backward() override {
        // Straight-through: the rounding step is treated as identity.
        if (Tensor* gx = grad_sink(x)) {
            parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) gx->data[i] += grad.data[i];
            });
        }
    }
};

struct MaskMulNode : Node {
    Node *x, *m;
    MaskMulNode(Node* x_, Node* m_) : x(x_), m(m_) {
        const Shape xs = x->value.shape, ms = m->value.shape;
        if (ms.c != 1 || ms.n != xs.n || ms.h != xs.h || ms.w != xs.w) {
            throw dimension_error("mask must be single-channel with matching batch and size");
        }
        inputs = {x, m};
        value.reset(xs);
    }
    const char* kind() const override { return "mask_mul"; }
    void forward() override {
        const Shape xs = value.shape;
        const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
        parallel_for(static_cast<std::int64_t>(xs.n) * xs.c, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / xs.c), c = static_cast<int>(t % xs.c);
                const double* xp = &x->value.at(n, c, 0, 0);
                const double* mp = &m->value.at(n, 0, 0, 0);
                double* op = &value.at(n, c, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) op[i] = xp[i] * mp[i];
            }
        });
    }
    void backward() override {
        const Shape xs = value.shape;
        const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
        if (Tensor* gx = grad_sink(x)) {
            parallel_for(static_cast<std::int64_t>(xs.n) * xs.c, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int n = static_cast<int>(t / xs.c), c = static_cast<int>(t % xs.c);
                    const double* gp = &grad.at(n, c, 0, 0);
                    const double* mp = &m->value.at(n, 0, 0, 0);
                    double* dst = &gx->at(n, c, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] += gp[i] * mp[i];
                }
            });
        }
        if (Tensor* gm = grad_sink(m)) {
            parallel_for(xs.n, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t n = lo; n < hi; ++n) {
                    double* dst = &gm->at(static_cast<int>(n), 0, 0, 0);
                    for (int c = 0; c < xs.c; ++c) {
                        const double* gp = &grad.at(static_cast<int>(n), c, 0, 0);
                        const double* xp = &x->value.at(static_cast<int>(n), c, 0, 0);
                        for (std::int64_t i = 0; i < plane; ++i) dst[i] += gp[i] * xp[i];
                    }
                }
            });
        }
    }
};

// (1-m)*a + m*b with a single-channel m. At binary m the result equals the
// selected operand bit for bit.
struct BlendNode : Node {
    Node *a, *b, *m;
    BlendNode(Node* a_, Node* b_, Node* m_) : a(a_), b(b_), m(m_) {
        const Shape as = a->value.shape, bs = b->value.shape, ms = m->value.shape;
        if (!(as == bs)) throw dimension_error("blend operands must share a shape");
        if (ms.c != 1 || ms.n != as.n || ms.h != as.h || ms.w != as.w) {
            throw dimension_error("blend mask must be single-channel with matching batch and size");
        }
        inputs = {a, b, m};
        value.reset(as);
    }
    const char* kind() const override { return "blend"; }
    void forward() override {
        const Shape s = value.shape;
        const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
        parallel_for(static_cast<std::int64_t>(s.n) * s.c, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / s.c), c = static_cast<int>(t % s.c);
                const double* ap = &a->value.at(n, c, 0, 0);
                const double* bp = &b->value.at(n, c, 0, 0);
                const double* mp = &m->value.at(n, 0, 0, 0);
                double* op = &value.at(n, c, 0, 0);
                for (std::int64_t i = 0; i < plane; ++i) {
                    op[i] = (1.0 - mp[i]) * ap[i] + mp[i] * bp[i];
                }
            }
        });
    }
    void backward() override {
        const Shape s = value.shape;
        const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
        if (Tensor* ga = grad_sink(a)) {
            parallel_for(static_cast<std::int64_t>(s.n) * s.c, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int n = static_cast<int>(t / s.c), c = static_cast<int>(t % s.c);
                    const double* gp = &grad.at(n, c, 0, 0);
                    const double* mp = &m->value.at(n, 0, 0, 0);
                    double* dst = &ga->at(n, c, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] += gp[i] * (1.0 - mp[i]);
                }
            });
        }
        if (Tensor* gb = grad_sink(b)) {
            parallel_for(static_cast<std::int64_t>(s.n) * s.c, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int n = static_cast<int>(t / s.c), c = static_cast<int>(t % s.c);
                    const double* gp = &grad.at(n, c, 0, 0);
                    const double* mp = &m->value.at(n, 0, 0, 0);
                    double* dst = &gb->at(n, c, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] += gp[i] * mp[i];
                }
            });
        }
        if (Tensor* gm = grad_sink(m)) {
            parallel_for(s.n, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t n = lo; n < hi; ++n) {
                    double* dst = &gm->at(static_cast<int>(n), 0, 0, 0);
                    for (int c = 0; c < s.c; ++c) {
                        const double* gp = &grad.at(static_cast<int>(n), c, 0, 0);
                        const double* ap = &a->value.at(static_cast<int>(n), c, 0, 0);
                        const double* bp = &b->value.at(static_cast<int>(n), c, 0, 0);
                        for (std::int64_t i = 0; i < plane; ++i) dst[i] += gp[i] * (bp[i] - ap[i]);
                    }
                }
            });
        }
    }
};

struct GlobalAvgPoolNode : Node {
    Node* x;
    explicit GlobalAvgPoolNode(Node* x_) : x(x_) {
        const Shape xs = x->value.shape;
        inputs = {x};
        value.reset({xs.n, xs.c, 1, 1});
    }
    const char* kind() const override { return "global_avg_pool"; }
    void forward() override {
        const Shape xs = x->value.shape;
        const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
        parallel_for(static_cast<std::int64_t>(xs.n) * xs.c, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t t = lo; t < hi; ++t) {
                const int n = static_cast<int>(t / xs.c), c = static_cast<int>(t % xs.c);
                const double* xp = &x->value.at(n, c, 0, 0);
                double acc = 0.0;
                for (std::int64_t i = 0; i < plane; ++i) acc += xp[i];
                value.at(n, c, 0, 0) = acc / static_cast<double>(plane);
            }
        });
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const Shape xs = x->value.shape;
            const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
            parallel_for(static_cast<std::int64_t>(xs.n) * xs.c, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t t = lo; t < hi; ++t) {
                    const int n = static_cast<int>(t / xs.c), c = static_cast<int>(t % xs.c);
                    const double g = grad.at(n, c, 0, 0) / static_cast<double>(plane);
                    double* dst = &gx->at(n, c, 0, 0);
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] += g;
                }
            });
        }
    }
};

struct LinearNode : Node {
    Node *x, *w, *b;
    LinearNode(Node* x_, Node* w_, Node* b_) : x(x_), w(w_), b(b_) {
        const Shape xs = x->value.shape, ws = w->value.shape;
        if (xs.h != 1 || xs.w != 1) throw dimension_error("linear input must be (n,c,1,1)");
        if (ws.h != 1 || ws.w != 1 || ws.c != xs.c) throw dimension_error("linear weight shape mismatch");
        if (b) {
            const Shape bs = b->value.shape;
            if (bs.n != 1 || bs.c != ws.n || bs.h != 1 || bs.w != 1) {
                throw dimension_error("linear bias shape mismatch");
            }
        }
        inputs = {x, w};
        if (b) inputs.push_back(b);
        value.reset({xs.n, ws.n, 1, 1});
    }
    const char* kind() const override { return "linear"; }
    void forward() override {
        const Shape xs = x->value.shape, ws = w->value.shape;
        for (int n = 0; n < xs.n; ++n) {
            for (int o = 0; o < ws.n; ++o) {
                double acc = b ? b->value.data[o] : 0.0;
                for (int i = 0; i < xs.c; ++i) acc += w->value.at(o, i, 0, 0) * x->value.at(n, i, 0, 0);
                value.at(n, o, 0, 0) = acc;
            }
        }
    }
    void backward() override {
        const Shape xs = x->value.shape, ws = w->value.shape;
        if (Tensor* gx = grad_sink(x)) {
            for (int n = 0; n < xs.n; ++n) {
                for (int i = 0; i < xs.c; ++i) {
                    double acc = 0.0;
                    for (int o = 0; o < ws.n; ++o) acc += grad.at(n, o, 0, 0) * w->value.at(o, i, 0, 0);
                    gx->at(n, i, 0, 0) += acc;
                }
            }
        }
        if (Tensor* gw = grad_sink(w)) {
            for (int o = 0; o < ws.n; ++o) {
                for (int i = 0; i < xs.c; ++i) {
                    double acc = 0.0;
                    for (int n = 0; n < xs.n; ++n) acc += grad.at(n, o, 0, 0) * x->value.at(n, i, 0, 0);
                    gw->at(o, i, 0, 0) += acc;
                }
            }
        }
        if (b) {
            if (Tensor* gb = grad_sink(b)) {
                for (int o = 0; o < ws.n; ++o) {
                    double acc = 0.0;
                    for (int n = 0; n < xs.n; ++n) acc += grad.at(n, o, 0, 0);
                    gb->data[o] += acc;
                }
            }
        }
    }
};

struct AbsNode : Node {
    Node* x;
    explicit AbsNode(Node* x_) : x(x_) {
        inputs = {x};
        value.reset(x->value.shape);
    }
    const char* kind() const override { return "abs"; }
    void forward() override {
        const auto& in = x->value.data;
        parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) value.data[i] = std::abs(in[i]);
        });
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const auto& in = x->value.data;
            parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) {
                    // Subgradient 0 at the kink.
                    const double s = in[i] > 0.0 ? 1.0 : (in[i] < 0.0 ? -1.0 : 0.0);
                    gx->data[i] += grad.data[i] * s;
                }
            });
        }
    }
};

struct AddNode : Node {
    Node *a, *b;
    AddNode(Node* a_, Node* b_) : a(a_), b(b_) {
        if (!(a->value.shape == b->value.shape)) throw dimension_error("add operands must share a shape");
        inputs = {a, b};
        value.reset(a->value.shape);
    }
    const char* kind() const override { return "add"; }
    void forward() override {
        parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) value.data[i] = a->value.data[i] + b->value.data[i];
        });
    }
    void backward() override {
        if (Tensor* ga = grad_sink(a)) {
            for (std::size_t i = 0; i < grad.data.size(); ++i) ga->data[i] += grad.data[i];
        }
        if (Tensor* gb = grad_sink(b)) {
            for (std::size_t i = 0; i < grad.data.size(); ++i) gb->data[i] += grad.data[i];
        }
    }
};

struct SubNode : Node {
    Node *a, *b;
    SubNode(Node* a_, Node* b_) : a(a_), b(b_) {
        if (!(a->value.shape == b->value.shape)) throw dimension_error("sub operands must share a shape");
        inputs = {a, b};
        value.reset(a->value.shape);
    }
    const char* kind() const override { return "sub"; }
    void forward() override {
        parallel_for(value.shape.count(), [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) value.data[i] = a->value.data[i] - b->value.data[i];
        });
    }
    void backward() override {
        if (Tensor* ga = grad_sink(a)) {
            for (std::size_t i = 0; i < grad.data.size(); ++i) ga->data[i] += grad.data[i];
        }
        if (Tensor* gb = grad_sink(b)) {
            for (std::size_t i = 0; i < grad.data.size(); ++i) gb->data[i] -= grad.data[i];
        }
    }
};

struct ScaleNode : Node {
    Node* x;
    double k;
    ScaleNode(Node* x_, double k_) : x(x_), k(k_) {
        inputs = {x};
        value.reset(x->value.shape);
    }
    const char* kind() const override { return "scale"; }
    void forward() override {
        for (std::size_t i = 0; i < value.data.size(); ++i) value.data[i] = k * x->value.data[i];
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            for (std::size_t i = 0; i < grad.data.size(); ++i) gx->data[i] += k * grad.data[i];
        }
    }
};

struct AddConstNode : Node {
    Node* x;
    double k;
    AddConstNode(Node* x_, double k_) : x(x_), k(k_) {
        inputs = {x};
        value.reset(x->value.shape);
    }
    const char* kind() const override { return "add_const"; }
    void forward() override {
        for (std::size_t i = 0; i < value.data.size(); ++i) value.data[i] = x->value.data[i] + k;
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            for (std::size_t i = 0; i < grad.data.size(); ++i) gx->data[i] += grad.data[i];
        }
    }
};

struct SumPerSampleNode : Node {
    Node* x;
    explicit SumPerSampleNode(Node* x_) : x(x_) {
        inputs = {x};
        value.reset({x->value.shape.n, 1, 1, 1});
    }
    const char* kind() const override { return "sum_per_sample"; }
    void forward() override {
        const Shape xs = x->value.shape;
        const std::int64_t per = xs.count() / xs.n;
        parallel_for(xs.n, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t n = lo; n < hi; ++n) {
                const double* xp = &x->value.data[static_cast<std::size_t>(n * per)];
                double acc = 0.0;
                for (std::int64_t i = 0; i < per; ++i) acc += xp[i];
                value.data[n] = acc;
            }
        });
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const Shape xs = x->value.shape;
            const std::int64_t per = xs.count() / xs.n;
            parallel_for(xs.n, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t n = lo; n < hi; ++n) {
                    const double g = grad.data[n];
                    double* dst = &gx->data[static_cast<std::size_t>(n * per)];
                    for (std::int64_t i = 0; i < per; ++i) dst[i] += g;
                }
            });
        }
    }
};

struct MeanAllNode : Node {
    Node* x;
    explicit MeanAllNode(Node* x_) : x(x_) {
        inputs = {x};
        value.reset({1, 1, 1, 1});
    }
    const char* kind() const override { return "mean_all"; }
    void forward() override {
        double acc = 0.0;
        for (double v : x->value.data) acc += v;
        value.data[0] = acc / static_cast<double>(x->value.data.size());
    }
    void backward() override {
        if (Tensor* gx = grad_sink(x)) {
            const double g = grad.data[0] / static_cast<double>(x->value.data.size());
            for (double& v : gx->data) v += g;
        }
    }
};

} // namespace

Node* Graph::adopt(std::unique_ptr<Node> node) {
    node->id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

Node* Graph::input(const std::string& name, Shape shape) {
    auto n = std::make_unique<InputNode>();
    n->name = name;
    n->value.reset(shape);
    return adopt(std::move(n));
}

Node* Graph::parameter(const std::string& name, Shape shape) {
    auto n = std::make_unique<ParameterNode>();
    n->name = name;
    n->value.reset(shape);
    return adopt(std::move(n));
}

Node* Graph::conv2d(Node* x, Node* w, Node* bias, int dilation, int stride) {
    return adopt(std::make_unique<Conv2dNode>(x, w, bias, dilation, stride));
}

Node* Graph::tconv2d(Node* x, Node* w, Node* bias, int dilation) {
    return adopt(std::make_unique<TConv2dNode>(x, w, bias, dilation));
}

Node* Graph::maxpool2x2(Node* x) { return adopt(std::make_unique<MaxPool2x2Node>(x)); }
Node* Graph::upsample2x2(Node* x) { return adopt(std::make_unique<Upsample2x2Node>(x)); }

Node* Graph::concat_channels(std::vector<Node*> xs) {
    return adopt(std::make_unique<ConcatChannelsNode>(std::move(xs)));
}

Node* Graph::elu(Node* x) { return adopt(std::make_unique<EluNode>(x)); }
Node* Graph::leaky_relu(Node* x, double slope) {
    return adopt(std::make_unique<LeakyReluNode>(x, slope));
}
Node* Graph::hard_sigmoid(Node* x) { return adopt(std::make_unique<HardSigmoidNode>(x)); }

Node* Graph::binarize(Node* c, BinarizationMode mode, Rng* rng) {
    return adopt(std::make_unique<BinarizeNode>(c, mode, rng));
}

Node* Graph::mask_mul(Node* x, Node* mask) { return adopt(std::make_unique<MaskMulNode>(x, mask)); }
Node* Graph::blend(Node* a, Node* b, Node* mask) {
    return adopt(std::make_unique<BlendNode>(a, b, mask));
}

Node* Graph::global_avg_pool(Node* x) { return adopt(std::make_unique<GlobalAvgPoolNode>(x)); }
Node* Graph::linear(Node* x, Node* w, Node* bias) {
    return adopt(std::make_unique<LinearNode>(x, w, bias));
}

Node* Graph::abs(Node* x) { return adopt(std::make_unique<AbsNode>(x)); }
Node* Graph::add(Node* a, Node* b) { return adopt(std::make_unique<AddNode>(a, b)); }
Node* Graph::sub(Node* a, Node* b) { return adopt(std::make_unique<SubNode>(a, b)); }
Node* Graph::scale(Node* x, double k) { return adopt(std::make_unique<ScaleNode>(x, k)); }
Node* Graph::add_const(Node* x, double k) { return adopt(std::make_unique<AddConstNode>(x, k)); }
Node* Graph::sum_per_sample(Node* x) { return adopt(std::make_unique<SumPerSampleNode>(x)); }
Node* Graph::mean_all(Node* x) { return adopt(std::make_unique<MeanAllNode>(x)); }

void Graph::forward() {
    for (auto& n : nodes_) n->forward();
}

void Graph::forward_from(int first_id) {
    for (std::size_t i = static_cast<std::size_t>(first_id); i < nodes_.size(); ++i) {
        nodes_[i]->forward();
    }
}

std::vector<char> Graph::path_mask(const Node* loss,
                                   const std::vector<const Node*>& targets) const {
    std::vector<char> dep(nodes_.size(), 0), reach(nodes_.size(), 0), out(nodes_.size(), 0);
    for (const Node* t : targets) dep[t->id] = 1;
    for (const auto& n : nodes_) {
        if (dep[n->id]) continue;
        for (const Node* u : n->inputs) {
            if (dep[u->id]) {
                dep[n->id] = 1;
                break;
            }
        }
    }
    reach[loss->id] = 1;
    for (int i = loss->id; i >= 0; --i) {
        if (!reach[i]) continue;
        for (const Node* u : nodes_[i]->inputs) reach[u->id] = 1;
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) out[i] = dep[i] && reach[i];
    return out;
}

void Graph::backward(Node* loss, const std::vector<char>& wanted) {
    if (loss->value.shape.count() != 1) throw dimension_error("backward needs a scalar loss");
    std::vector<char> mask;
    if (wanted.empty()) {
        std::vector<const Node*> targets;
        for (const auto& n : nodes_) {
            if (n->trainable) targets.push_back(n.get());
        }
        mask = path_mask(loss, targets);
    } else {
        if (wanted.size() != nodes_.size()) throw dimension_error("gradient mask size mismatch");
        mask = wanted;
    }

    for (auto& n : nodes_) {
        n->grad_wanted = mask[n->id] != 0;
        n->grad_ready = false;
    }
    loss->grad_wanted = true;
    loss->grad.reset(loss->value.shape);
    loss->grad.data[0] = 1.0;
    loss->grad_ready = true;

    for (int i = loss->id; i >= 0; --i) {
        Node* n = nodes_[i].get();
        if (!n->grad_ready || !n->grad_wanted) continue;
        n->backward();
    }
}

std::vector<Node*> Graph::trainable_nodes() const {
    std::vector<Node*> out;
    for (const auto& n : nodes_) {
        if (n->trainable) out.push_back(n.get());
    }
    return out;
}

GradCheckReport grad_check(Graph& g, Node* loss, double h, int max_elements_per_leaf) {
    if (loss->value.shape.count() != 1) throw dimension_error("grad check needs a scalar output");
    const auto& nodes = g.nodes();

    // Reachability, and reachability along binarization-free paths only.
    std::vector<char> reach(nodes.size(), 0), clean(nodes.size(), 0);
    reach[loss->id] = 1;
    clean[loss->id] = 1;
    GradCheckReport report;
    for (int i = loss->id; i >= 0; --i) {
        const Node* v = nodes[i].get();
        if (!reach[v->id]) continue;
        if (v->straight_through) report.straight_through_present = true;
        for (const Node* u : v->inputs) {
            reach[u->id] = 1;
            if (clean[v->id] && !v->straight_through) clean[u->id] = 1;
        }
    }

    std::vector<Node*> leaves;
    std::vector<const Node*> targets;
    for (const auto& n : nodes) {
        if (!n->inputs.empty() || !reach[n->id]) continue;
        const std::string label = n->name.empty() ? std::string(n->kind()) : n->name;
        if (!clean[n->id]) {
            report.excluded_leaves.push_back(label);
            continue;
        }
        leaves.push_back(n.get());
        targets.push_back(n.get());
    }

    g.forward();
    g.backward(loss, g.path_mask(loss, targets));
    std::vector<std::vector<double>> saved;
    saved.reserve(leaves.size());
    for (Node* leaf : leaves) {
        saved.push_back(leaf->grad_ready ? leaf->grad.data
                                         : std::vector<double>(leaf->value.data.size(), 0.0));
    }

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Node* leaf = leaves[li];
        const std::int64_t count = leaf->value.shape.count();
        std::int64_t step = 1;
        if (max_elements_per_leaf > 0 && count > max_elements_per_leaf) {
            step = count / max_elements_per_leaf;
        }
        for (std::int64_t i = 0; i < count; i += step) {
            const double old = leaf->value.data[i];
            leaf->value.data[i] = old + h;
            g.forward();
            const double up = loss->value.data[0];
            leaf->value.data[i] = old - h;
            g.forward();
            const double down = loss->value.data[0];
            leaf->value.data[i] = old;
            const double fd = (up - down) / (2.0 * h);
            const double ad = saved[li][i];
            const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-6});
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.checked_elements;
        }
    }
    g.forward(); // restore values after the probes
    return report;
}

} // namespace sparsepaint::ad
