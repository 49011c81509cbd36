#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "sparsepaint/errors.hpp"
#include "sparsepaint/graph.hpp"
#include "sparsepaint/optim.hpp"
#include "sparsepaint/parallel.hpp"
#include "sparsepaint/rng.hpp"

using namespace sparsepaint;
using namespace sparsepaint::ad;

namespace {

void fill_uniform(Tensor& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (double& v : t.data) v = rng.uniform(lo, hi);
}

// Direct six-loop convolution with the library's conventions: sample spacing
// max(dilation,1), padding 2*spacing, 5x5 kernels, weight (out,in,5,5).
Tensor conv_reference(const Tensor& x, const Tensor& w, const Tensor* bias, int dilation,
                      int stride) {
    const int s = dilation > 0 ? dilation : 1;
    const int pad = 2 * s;
    const int oh = (x.shape.h + 2 * pad - (4 * s + 1)) / stride + 1;
    const int ow = (x.shape.w + 2 * pad - (4 * s + 1)) / stride + 1;
    Tensor out(Shape{x.shape.n, w.shape.n, oh, ow});
    for (int n = 0; n < x.shape.n; ++n)
        for (int oc = 0; oc < w.shape.n; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = bias ? bias->at(0, oc, 0, 0) : 0.0;
                    for (int ic = 0; ic < x.shape.c; ++ic)
                        for (int ky = 0; ky < 5; ++ky)
                            for (int kx = 0; kx < 5; ++kx) {
                                const int iy = oy * stride - pad + ky * s;
                                const int ix = ox * stride - pad + kx * s;
                                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w)
                                    continue;
                                acc += x.at(n, ic, iy, ix) * w.at(oc, ic, ky, kx);
                            }
                    out.at(n, oc, oy, ox) = acc;
                }
    return out;
}

// Transposed convolution as the literal adjoint of conv_reference at stride 1:
// scatter each input value through the kernel. Weight layout (in,out,5,5).
Tensor tconv_reference(const Tensor& x, const Tensor& w, const Tensor* bias, int dilation) {
    const int s = dilation > 0 ? dilation : 1;
    const int pad = 2 * s;
    Tensor out(Shape{x.shape.n, w.shape.c, x.shape.h, x.shape.w});
    for (int n = 0; n < x.shape.n; ++n)
        for (int oc = 0; oc < w.shape.c; ++oc)
            for (int oy = 0; oy < out.shape.h; ++oy)
                for (int ox = 0; ox < out.shape.w; ++ox) {
                    double acc = bias ? bias->at(0, oc, 0, 0) : 0.0;
                    for (int ic = 0; ic < x.shape.c; ++ic)
                        for (int ky = 0; ky < 5; ++ky)
                            for (int kx = 0; kx < 5; ++kx) {
                                // conv writes x[iy,ix]*w to y[oy,ox] with
                                // iy = oy - pad + ky*s; invert for the scatter.
                                const int iy = oy + pad - ky * s;
                                const int ix = ox + pad - kx * s;
                                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w)
                                    continue;
                                acc += x.at(n, ic, iy, ix) * w.at(ic, oc, ky, kx);
                            }
                    out.at(n, oc, oy, ox) = acc;
                }
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

} // namespace

TEST_CASE("conv2d forward matches the direct loop") {
    Rng rng(1);
    for (int dilation : {0, 2, 5}) {
        for (int stride : {1, 2}) {
            Graph g;
            Node* x = g.input("x", Shape{2, 3, 12, 11});
            Node* w = g.parameter("w", Shape{4, 3, 5, 5});
            Node* b = g.parameter("b", Shape{1, 4, 1, 1});
            Node* y = g.conv2d(x, w, b, dilation, stride);
            fill_uniform(x->value, rng);
            fill_uniform(w->value, rng);
            fill_uniform(b->value, rng);
            g.forward();
            const Tensor want = conv_reference(x->value, w->value, &b->value, dilation, stride);
            REQUIRE(y->value.shape == want.shape);
            for (std::size_t i = 0; i < want.data.size(); ++i)
                CHECK(y->value.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("tconv2d forward matches the direct scatter") {
    Rng rng(2);
    for (int dilation : {0, 2, 5}) {
        Graph g;
        Node* x = g.input("x", Shape{2, 4, 9, 10});
        Node* w = g.parameter("w", Shape{4, 3, 5, 5});
        Node* b = g.parameter("b", Shape{1, 3, 1, 1});
        Node* y = g.tconv2d(x, w, b, dilation);
        fill_uniform(x->value, rng);
        fill_uniform(w->value, rng);
        fill_uniform(b->value, rng);
        g.forward();
        const Tensor want = tconv_reference(x->value, w->value, &b->value, dilation);
        REQUIRE(y->value.shape == want.shape);
        for (std::size_t i = 0; i < want.data.size(); ++i)
            CHECK(y->value.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("tconv2d is the adjoint of conv2d") {
    Rng rng(3);
    for (int dilation : {0, 2, 5}) {
        Graph gc;
        Node* x = gc.input("x", Shape{1, 3, 8, 8});
        Node* w = gc.parameter("w", Shape{5, 3, 5, 5});
        Node* cx = gc.conv2d(x, w, nullptr, dilation, 1);
        fill_uniform(x->value, rng);
        fill_uniform(w->value, rng);
        gc.forward();

        Graph gt;
        Node* y = gt.input("y", Shape{1, 5, 8, 8});
        // same weight values reinterpreted under the (in,out,5,5) layout
        Node* wt = gt.parameter("wt", Shape{5, 3, 5, 5});
        Node* ty = gt.tconv2d(y, wt, nullptr, dilation);
        fill_uniform(y->value, rng);
        wt->value.data = w->value.data;
        gt.forward();

        const double lhs = dot(cx->value, y->value);
        const double rhs = dot(x->value, ty->value);
        CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

namespace {

// Builds a scalar loss that exercises `body`, then runs the finite-difference
// comparison. All inputs land in [lo,hi].
void check_op(std::uint64_t seed, double lo, double hi,
              Node* (*body)(Graph&, Node*), Shape in_shape = Shape{2, 3, 6, 6},
              double tol = 1e-3) {
    Graph g;
    Node* x = g.parameter("x", in_shape);
    Node* y = body(g, x);
    Node* loss = g.mean_all(y);
    Rng rng(seed);
    fill_uniform(x->value, rng, lo, hi);
    g.forward();
    const GradCheckReport rep = grad_check(g, loss, 1e-5);
    CHECK(rep.checked_elements > 0);
    CHECK(rep.max_rel_error <= tol);
}

} // namespace

TEST_CASE("gradients match finite differences for every op") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        // pointwise ops; inputs kept clear of the kinks
        check_op(seed, 0.1, 0.9, [](Graph& g, Node* x) { return g.elu(x); });
        check_op(seed, -0.9, -0.1, [](Graph& g, Node* x) { return g.elu(x); });
        check_op(seed, 0.1, 0.9, [](Graph& g, Node* x) { return g.leaky_relu(x); });
        check_op(seed, -0.9, -0.1, [](Graph& g, Node* x) { return g.leaky_relu(x, 0.3); });
        check_op(seed, -2.0, 2.0, [](Graph& g, Node* x) { return g.hard_sigmoid(x); });
        check_op(seed, 0.1, 1.0, [](Graph& g, Node* x) { return g.abs(x); });
        check_op(seed, -1.0, -0.1, [](Graph& g, Node* x) { return g.abs(x); });
        check_op(seed, -1.0, 1.0, [](Graph& g, Node* x) { return g.scale(x, -2.5); });
        check_op(seed, -1.0, 1.0, [](Graph& g, Node* x) { return g.add_const(x, 0.7); });
        check_op(seed, -1.0, 1.0, [](Graph& g, Node* x) { return g.sum_per_sample(x); });
        check_op(seed, -1.0, 1.0, [](Graph& g, Node* x) { return g.upsample2x2(x); });
        check_op(seed, -1.0, 1.0,
                 [](Graph& g, Node* x) { return g.add(x, g.scale(x, 0.5)); });
        check_op(seed, -1.0, 1.0,
                 [](Graph& g, Node* x) { return g.sub(g.scale(x, 2.0), x); });
        check_op(seed, -1.0, 1.0,
                 [](Graph& g, Node* x) { return g.concat_channels({x, g.scale(x, 3.0)}); });
        check_op(seed, -1.0, 1.0, [](Graph& g, Node* x) { return g.global_avg_pool(x); });

        // maxpool needs distinct values so FD does not straddle a tie
        {
            Graph g;
            Node* x = g.parameter("x", Shape{1, 2, 6, 6});
            Node* loss = g.mean_all(g.maxpool2x2(x));
            Rng rng(seed + 100);
            for (std::size_t i = 0; i < x->value.data.size(); ++i)
                x->value.data[i] =
                    static_cast<double>(i) * 0.03 + rng.uniform(0.0, 0.01);
            g.forward();
            CHECK(grad_check(g, loss, 1e-6).max_rel_error <= 1e-3);
        }

        // conv / tconv, all dilations, both strides, with and without bias
        for (int dilation : {0, 2, 5}) {
            for (int stride : {1, 2}) {
                Graph g;
                Node* x = g.parameter("x", Shape{1, 2, 8, 8});
                Node* w = g.parameter("w", Shape{3, 2, 5, 5});
                Node* b = g.parameter("b", Shape{1, 3, 1, 1});
                Node* loss = g.mean_all(g.conv2d(x, w, b, dilation, stride));
                Rng rng(seed + 200);
                fill_uniform(x->value, rng);
                fill_uniform(w->value, rng);
                fill_uniform(b->value, rng);
                g.forward();
                CHECK(grad_check(g, loss, 1e-5).max_rel_error <= 1e-3);
            }
            Graph g;
            Node* x = g.parameter("x", Shape{1, 3, 8, 8});
            Node* w = g.parameter("w", Shape{3, 2, 5, 5});
            Node* loss = g.mean_all(g.tconv2d(x, w, nullptr, dilation));
            Rng rng(seed + 300);
            fill_uniform(x->value, rng);
            fill_uniform(w->value, rng);
            g.forward();
            CHECK(grad_check(g, loss, 1e-5).max_rel_error <= 1e-3);
        }

        // mask_mul and blend with a smooth mask in (0,1)
        {
            Graph g;
            Node* x = g.parameter("x", Shape{2, 3, 4, 4});
            Node* m = g.parameter("m", Shape{2, 1, 4, 4});
            Node* loss = g.mean_all(g.mask_mul(x, m));
            Rng rng(seed + 400);
            fill_uniform(x->value, rng);
            fill_uniform(m->value, rng, 0.1, 0.9);
            g.forward();
            CHECK(grad_check(g, loss, 1e-5).max_rel_error <= 1e-3);
        }
        {
            Graph g;
            Node* a = g.parameter("a", Shape{2, 3, 4, 4});
            Node* b = g.parameter("b", Shape{2, 3, 4, 4});
            Node* m = g.parameter("m", Shape{2, 1, 4, 4});
            Node* loss = g.mean_all(g.blend(a, b, m));
            Rng rng(seed + 500);
            fill_uniform(a->value, rng);
            fill_uniform(b->value, rng);
            fill_uniform(m->value, rng, 0.1, 0.9);
            g.forward();
            CHECK(grad_check(g, loss, 1e-5).max_rel_error <= 1e-3);
        }

        // linear head on pooled features
        {
            Graph g;
            Node* x = g.parameter("x", Shape{2, 4, 6, 6});
            Node* w = g.parameter("w", Shape{1, 4, 1, 1});
            Node* b = g.parameter("b", Shape{1, 1, 1, 1});
            Node* loss = g.mean_all(g.linear(g.global_avg_pool(x), w, b));
            Rng rng(seed + 600);
            fill_uniform(x->value, rng);
            fill_uniform(w->value, rng);
            fill_uniform(b->value, rng);
            g.forward();
            CHECK(grad_check(g, loss, 1e-5).max_rel_error <= 1e-3);
        }
    }
}

TEST_CASE("activation derivatives take the documented one-sided values") {
    // elu'(0) = 1, leaky slope below zero, hard_sigmoid slope 0.2 inside the
    // clamp: probe with a one-element graph each and read the leaf gradient.
    auto grad_at = [](double x0, Node* (*body)(Graph&, Node*)) {
        Graph g;
        Node* x = g.parameter("x", Shape{1, 1, 1, 1});
        Node* loss = g.mean_all(body(g, x));
        x->value.data[0] = x0;
        g.forward();
        g.backward(loss);
        return x->grad.data[0];
    };
    CHECK(grad_at(0.0, [](Graph& g, Node* x) { return g.elu(x); }) == 1.0);
    CHECK(grad_at(-0.5, [](Graph& g, Node* x) { return g.elu(x); }) ==
          doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(grad_at(-1.0, [](Graph& g, Node* x) { return g.leaky_relu(x); }) == 0.2);
    CHECK(grad_at(1.0, [](Graph& g, Node* x) { return g.leaky_relu(x); }) == 1.0);
    CHECK(grad_at(0.0, [](Graph& g, Node* x) { return g.hard_sigmoid(x); }) == 0.2);
    CHECK(grad_at(3.0, [](Graph& g, Node* x) { return g.hard_sigmoid(x); }) == 0.0);
    CHECK(grad_at(0.0, [](Graph& g, Node* x) { return g.abs(x); }) == 0.0);
}

TEST_CASE("forward_from recomputes only the tail and matches a full pass") {
    Graph g;
    Node* x = g.input("x", Shape{1, 2, 4, 4});
    Node* w = g.parameter("w", Shape{2, 2, 5, 5});
    Node* h1 = g.elu(g.conv2d(x, w, nullptr, 0, 1));
    const int section = g.size();
    Node* y = g.input("y", Shape{1, 2, 4, 4});
    Node* loss = g.mean_all(g.add(h1, y));
    Rng rng(7);
    fill_uniform(x->value, rng);
    fill_uniform(w->value, rng);
    fill_uniform(y->value, rng);
    g.forward();
    const double full1 = loss->value.data[0];

    // change only the section input; a tail pass must match a full pass
    fill_uniform(y->value, rng);
    g.forward_from(section);
    const double tail = loss->value.data[0];
    const Tensor h1_saved = h1->value;
    g.forward();
    CHECK(loss->value.data[0] == tail);
    CHECK(h1->value.data == h1_saved.data);
    CHECK(tail != full1);
}

TEST_CASE("path restriction delivers exactly the wanted gradients") {
    Graph g;
    Node* a = g.parameter("a", Shape{1, 1, 2, 2});
    Node* b = g.parameter("b", Shape{1, 1, 2, 2});
    Node* loss = g.mean_all(g.add(g.scale(a, 2.0), g.scale(b, 3.0)));
    Rng rng(8);
    fill_uniform(a->value, rng);
    fill_uniform(b->value, rng);
    g.forward();

    const auto mask_a = g.path_mask(loss, {a});
    g.backward(loss, mask_a);
    CHECK(a->grad_ready);
    CHECK(!b->grad_ready);
    CHECK(a->grad.data[0] == doctest::Approx(2.0 / 4.0).epsilon(1e-12));

    g.backward(loss);
    CHECK(a->grad_ready);
    CHECK(b->grad_ready);
    CHECK(b->grad.data[0] == doctest::Approx(3.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("fan-out accumulates gradients from every consumer") {
    Graph g;
    Node* x = g.parameter("x", Shape{1, 1, 1, 1});
    Node* loss = g.mean_all(g.add(g.scale(x, 2.0), g.scale(x, 5.0)));
    x->value.data[0] = 0.3;
    g.forward();
    g.backward(loss);
    CHECK(x->grad.data[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("backward is bit-identical across repeats and thread caps") {
    auto run = [](int threads) {
        set_thread_cap(threads);
        Graph g;
        Node* x = g.parameter("x", Shape{2, 3, 16, 16});
        Node* w1 = g.parameter("w1", Shape{6, 3, 5, 5});
        Node* w2 = g.parameter("w2", Shape{6, 6, 5, 5});
        Node* h = g.elu(g.conv2d(x, w1, nullptr, 2, 1));
        Node* loss = g.mean_all(g.abs(g.conv2d(h, w2, nullptr, 0, 2)));
        Rng rng(99);
        fill_uniform(x->value, rng);
        fill_uniform(w1->value, rng);
        fill_uniform(w2->value, rng);
        g.forward();
        g.backward(loss);
        std::vector<double> out = x->grad.data;
        out.insert(out.end(), w1->grad.data.begin(), w1->grad.data.end());
        out.insert(out.end(), w2->grad.data.begin(), w2->grad.data.end());
        out.push_back(loss->value.data[0]);
        return out;
    };
    const auto a = run(1);
    const auto b = run(1);
    const auto c = run(4);
    CHECK(a == b);
    CHECK(a == c);
    set_thread_cap(0);
}

TEST_CASE("hard rounding binarizes with ties going up") {
    Graph g;
    Node* c = g.input("c", Shape{1, 1, 1, 5});
    Node* b = g.binarize(c, BinarizationMode::hard_rounding, nullptr);
    c->value.data = {0.0, 0.49, 0.5, 0.51, 1.0};
    g.forward();
    CHECK(b->value.data == std::vector<double>{0.0, 0.0, 1.0, 1.0, 1.0});
    CHECK(b->straight_through);
}

TEST_CASE("binarization rejects values outside the unit interval") {
    Graph g;
    Node* c = g.input("c", Shape{1, 1, 1, 2});
    g.binarize(c, BinarizationMode::hard_rounding, nullptr);
    c->value.data = {0.5, 1.2};
    CHECK_THROWS_AS(g.forward(), domain_error);
    c->value.data = {-0.1, 0.5};
    CHECK_THROWS_AS(g.forward(), domain_error);
}

TEST_CASE("stochastic rounding hits the requested rate") {
    const int n = 100000;
    Graph g;
    Node* c = g.input("c", Shape{1, 1, 1, n});
    Rng rng(1234);
    Node* b = g.binarize(c, BinarizationMode::stochastic_rounding, &rng);
    c->value.fill(0.3);
    g.forward();
    double ones = 0.0;
    for (double v : b->value.data) {
        CHECK((v == 0.0 || v == 1.0));
        ones += v;
    }
    CHECK(std::abs(ones / n - 0.3) <= 0.01);
    // certainty stays certain
    Graph g2;
    Node* c2 = g2.input("c", Shape{1, 1, 1, 4});
    Rng rng2(1);
    Node* b2 = g2.binarize(c2, BinarizationMode::stochastic_rounding, &rng2);
    c2->value.data = {1.0, 1.0, 0.0, 0.0};
    g2.forward();
    CHECK(b2->value.data == std::vector<double>{1.0, 1.0, 0.0, 0.0});
}

TEST_CASE("additive noise rounding stays binary over the whole range") {
    const int n = 10000;
    Graph g;
    Node* c = g.input("c", Shape{1, 1, 1, n});
    Rng rng(77);
    Node* b = g.binarize(c, BinarizationMode::additive_noise, &rng);
    Rng fill(78);
    for (double& v : c->value.data) v = fill.uniform();
    g.forward();
    for (double v : b->value.data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("binarization backward passes gradients through verbatim") {
    Graph g;
    Node* c = g.parameter("c", Shape{1, 1, 1, 3});
    Node* b = g.binarize(c, BinarizationMode::hard_rounding, nullptr);
    Node* loss = g.mean_all(g.scale(b, 6.0));
    c->value.data = {0.2, 0.6, 0.9};
    g.forward();
    g.backward(loss);
    // d loss / d b = 2 per element; straight-through copies it to c
    for (double v : c->grad.data) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("grad_check skips leaves hidden behind binarization") {
    Graph g;
    Node* c = g.parameter("c", Shape{1, 1, 2, 2});
    Node* d = g.parameter("d", Shape{1, 1, 2, 2});
    Node* b = g.binarize(c, BinarizationMode::hard_rounding, nullptr);
    Node* loss = g.mean_all(g.add(b, d));
    Rng rng(9);
    fill_uniform(c->value, rng, 0.1, 0.9);
    fill_uniform(d->value, rng);
    g.forward();
    const GradCheckReport rep = grad_check(g, loss, 1e-5);
    CHECK(rep.straight_through_present);
    REQUIRE(rep.excluded_leaves.size() == 1);
    CHECK(rep.excluded_leaves[0] == "c");
    CHECK(rep.max_rel_error <= 1e-3);
    CHECK(rep.checked_elements == 4); // only d
}

TEST_CASE("grad_check requires a scalar loss") {
    Graph g;
    Node* x = g.parameter("x", Shape{1, 1, 2, 2});
    Node* y = g.scale(x, 2.0);
    Rng rng(10);
    fill_uniform(x->value, rng);
    g.forward();
    CHECK_THROWS_AS(grad_check(g, y, 1e-5), dimension_error);
}

TEST_CASE("adam follows the bias-corrected update exactly") {
    Graph g;
    Node* p = g.parameter("p", Shape{1, 1, 1, 2});
    p->value.data = {1.0, -2.0};

    AdamConfig cfg;
    cfg.lr = 0.1;
    AdamState state;

    // hand-rolled reference state
    double m[2] = {0, 0}, v[2] = {0, 0};
    double ref[2] = {1.0, -2.0};
    const double grads[3][2] = {{0.5, -1.0}, {0.25, 0.75}, {-0.125, 0.5}};

    for (int step = 1; step <= 3; ++step) {
        p->grad.reset(p->value.shape);
        p->grad.data = {grads[step - 1][0], grads[step - 1][1]};
        p->grad_ready = true;
        adam_step({p}, state, cfg);
        for (int i = 0; i < 2; ++i) {
            const double gi = grads[step - 1][i];
            m[i] = 0.9 * m[i] + 0.1 * gi;
            v[i] = 0.999 * v[i] + 0.001 * gi * gi;
            const double mhat = m[i] / (1.0 - std::pow(0.9, step));
            const double vhat = v[i] / (1.0 - std::pow(0.999, step));
            ref[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            CHECK(p->value.data[static_cast<std::size_t>(i)] ==
                  doctest::Approx(ref[i]).epsilon(1e-15));
        }
    }
    CHECK(state.step == 3);
}

TEST_CASE("adam refuses stale gradients") {
    Graph g;
    Node* p = g.parameter("p", Shape{1, 1, 1, 1});
    p->grad.reset(p->value.shape);
    p->grad_ready = false;
    AdamState state;
    CHECK_THROWS_AS(adam_step({p}, state), domain_error);
}

TEST_CASE("weight normalization yields unit filter norms") {
    Tensor w(Shape{3, 2, 5, 5});
    Tensor b(Shape{1, 3, 1, 1});
    Rng rng(55);
    fill_uniform(w, rng);
    fill_uniform(b, rng);
    // zero out filter 2 entirely
    for (int ic = 0; ic < 2; ++ic)
        for (int ky = 0; ky < 5; ++ky)
            for (int kx = 0; kx < 5; ++kx) w.at(2, ic, ky, kx) = 0.0;
    b.at(0, 2, 0, 0) = 0.0;

    std::vector<FilterRef> filters;
    for (int oc = 0; oc < 3; ++oc) filters.push_back({&w, oc, &b, oc});
    const int zeros = weight_normalize(filters);
    CHECK(zeros == 1);

    for (int oc = 0; oc < 2; ++oc) {
        double sq = b.at(0, oc, 0, 0) * b.at(0, oc, 0, 0);
        for (int ic = 0; ic < 2; ++ic)
            for (int ky = 0; ky < 5; ++ky)
                for (int kx = 0; kx < 5; ++kx) sq += w.at(oc, ic, ky, kx) * w.at(oc, ic, ky, kx);
        CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
    }
    // the zero filter is untouched
    for (int ic = 0; ic < 2; ++ic)
        for (int ky = 0; ky < 5; ++ky)
            for (int kx = 0; kx < 5; ++kx) CHECK(w.at(2, ic, ky, kx) == 0.0);

    // renormalising the normalised set is a no-op
    const std::vector<double> snapshot = w.data;
    weight_normalize(filters);
    for (std::size_t i = 0; i < snapshot.size(); ++i)
        CHECK(w.data[i] == doctest::Approx(snapshot[i]).epsilon(1e-12));
}
