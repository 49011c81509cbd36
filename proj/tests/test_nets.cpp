#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "sparsepaint/checkpoint.hpp"
#include "sparsepaint/dataset.hpp"
#include "sparsepaint/errors.hpp"
#include "sparsepaint/graph.hpp"
#include "sparsepaint/image.hpp"
#include "sparsepaint/net.hpp"
#include "sparsepaint/rng.hpp"
#include "support/tmpdir.hpp"

using namespace sparsepaint;
using ad::Graph;
using ad::Node;
using ad::Shape;

namespace {

net::NetConfig small_config(int image_size = 16, int channels = 1) {
    net::NetConfig cfg;
    cfg.scales = 3;
    cfg.base_channels = {6, 12, 24};
    cfg.image_size = image_size;
    cfg.channels = channels;
    return cfg;
}

void fill_uniform(ad::Tensor& t, Rng& rng, double lo = 0.0, double hi = 1.0) {
    for (double& v : t.data) v = rng.uniform(lo, hi);
}

} // namespace

TEST_CASE("network config validation catches each bad field") {
    net::NetConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());

    cfg.scales = 0;
    CHECK_THROWS_AS(cfg.validate(), domain_error);

    cfg = small_config();
    cfg.base_channels = {6, 12}; // wrong length
    CHECK_THROWS_AS(cfg.validate(), dimension_error);

    cfg = small_config();
    cfg.base_channels = {6, 12, 25}; // not a multiple of 3
    CHECK_THROWS_AS(cfg.validate(), domain_error);

    cfg = small_config();
    cfg.channels = 2;
    CHECK_THROWS_AS(cfg.validate(), dimension_error);

    cfg = small_config();
    cfg.image_size = 18; // not divisible by 2^(scales-1)
    CHECK_THROWS_AS(cfg.validate(), dimension_error);
}

TEST_CASE("hourglass maps its input to a unit-interval image of matching size") {
    const net::NetConfig cfg = small_config(16, 1);
    Graph g;
    Rng init(1);
    const int in_c = 2 * cfg.channels + 1;
    auto params = net::make_hourglass_params(g, cfg, in_c, cfg.channels, "gen", init);
    Node* x = g.input("x", Shape{2, in_c, 16, 16});
    Node* y = net::apply_hourglass(g, cfg, params, x);
    Rng rng(2);
    fill_uniform(x->value, rng);
    g.forward();
    REQUIRE(y->value.shape == (Shape{2, cfg.channels, 16, 16}));
    for (double v : y->value.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("single-scale hourglass still works") {
    net::NetConfig cfg;
    cfg.scales = 1;
    cfg.base_channels = {6};
    cfg.image_size = 8;
    cfg.channels = 1;
    cfg.validate();
    Graph g;
    Rng init(3);
    auto params = net::make_hourglass_params(g, cfg, 2, 1, "m", init);
    Node* x = g.input("x", Shape{1, 2, 8, 8});
    Node* y = net::apply_hourglass(g, cfg, params, x);
    Rng rng(4);
    fill_uniform(x->value, rng);
    g.forward();
    CHECK(y->value.shape == (Shape{1, 1, 8, 8}));
}

TEST_CASE("discriminator reduces image plus mask plane to one score per sample") {
    const net::NetConfig cfg = small_config(16, 3);
    Graph g;
    Rng init(5);
    auto params = net::make_discriminator_params(g, cfg, "d", init);
    Node* img = g.input("img", Shape{4, 3, 16, 16});
    Node* mplane = g.input("mp", Shape{4, 1, 16, 16});
    Node* score = net::apply_discriminator(g, cfg, params, img, mplane);
    Rng rng(6);
    fill_uniform(img->value, rng);
    fill_uniform(mplane->value, rng);
    g.forward();
    CHECK(score->value.shape == (Shape{4, 1, 1, 1}));
    // scores differ across samples: no accidental batch mixing
    std::set<double> distinct(score->value.data.begin(), score->value.data.end());
    CHECK(distinct.size() == 4);
}

TEST_CASE("parameter names are unique and biases start at zero") {
    const net::NetConfig cfg = small_config();
    Graph g;
    Rng init(7);
    auto hg = net::make_hourglass_params(g, cfg, 3, 1, "gen", init);
    auto d = net::make_discriminator_params(g, cfg, "d", init);
    std::set<std::string> names;
    int bias_nonzero = 0;
    for (Node* p : net::param_nodes(hg)) {
        CHECK(names.insert(p->name).second);
        CHECK(p->trainable);
        if (p->name.back() == 'b')
            for (double v : p->value.data) bias_nonzero += v != 0.0;
    }
    for (Node* p : net::param_nodes(d)) CHECK(names.insert(p->name).second);
    CHECK(bias_nonzero == 0);

    // weight magnitudes respect the fan-in bound
    for (Node* p : net::param_nodes(hg)) {
        if (p->name.back() != 'w') continue;
        const double bound = std::sqrt(6.0 / (p->value.shape.c * 25.0)) + 1e-12;
        for (double v : p->value.data) CHECK(std::abs(v) <= bound);
    }
}

TEST_CASE("checkpoints round-trip exactly") {
    TempDir tmp("ckpt");
    ckpt::Checkpoint c;
    c.set_meta("mode", "joint");
    c.set_meta("epoch", "17");
    ckpt::NamedTensor t;
    t.name = "gen.enc0.b0.w";
    t.dims = {3, 2, 5, 5};
    Rng rng(8);
    for (int i = 0; i < 150; ++i) t.data.push_back(static_cast<float>(rng.uniform(-1, 1)));
    c.tensors.push_back(t);

    const std::string path = tmp.str("model.spw");
    ckpt::save_checkpoint(c, path);
    const ckpt::Checkpoint back = ckpt::load_checkpoint(path);
    CHECK(back.meta_value("mode") == "joint");
    CHECK(back.meta_value("epoch") == "17");
    CHECK(back.meta == c.meta); // order preserved
    REQUIRE(back.tensors.size() == 1);
    CHECK(back.tensors[0].name == t.name);
    CHECK(back.tensors[0].dims == t.dims);
    CHECK(back.tensors[0].data == t.data);
    CHECK_THROWS_AS(back.meta_value("missing"), format_error);
    CHECK_THROWS_AS(back.tensor("missing"), format_error);

    // identical content serialises to identical bytes
    const std::string path2 = tmp.str("model2.spw");
    ckpt::save_checkpoint(back, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    TempDir tmp("ckptbad");
    ckpt::Checkpoint c;
    c.set_meta("mode", "joint");
    const std::string path = tmp.str("ok.spw");
    ckpt::save_checkpoint(c, path);

    // bad magic
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes[0] = 'X';
        std::ofstream out(tmp.str("magic.spw"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(ckpt::load_checkpoint(tmp.str("magic.spw")), format_error);

    // truncation
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), {});
        bytes.resize(bytes.size() - 1);
        std::ofstream out(tmp.str("trunc.spw"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(ckpt::load_checkpoint(tmp.str("trunc.spw")), format_error);

    CHECK_THROWS_AS(ckpt::load_checkpoint(tmp.str("absent.spw")), format_error);
}

TEST_CASE("datasets load sorted and enforce one shape") {
    TempDir tmp("data");
    Rng rng(9);
    for (const char* name : {"b.pgm", "a.pgm", "c.pgm"}) {
        Image img(8, 8, 1);
        for (double& v : img.data) v = std::floor(rng.uniform() * 255.0 + 0.5) / 255.0;
        save_image(img, tmp.str(name));
    }
    const auto files = list_dataset_files(tmp.path());
    REQUIRE(files.size() == 3);
    CHECK(files[0].find("a.pgm") != std::string::npos);
    CHECK(files[2].find("c.pgm") != std::string::npos);

    const auto images = load_dataset(tmp.path());
    CHECK(images.size() == 3);

    // a misfit shape fails the load unless cropped to match
    Image odd(10, 10, 1, 0.25);
    save_image(odd, tmp.str("d.pgm"));
    CHECK_THROWS_AS(load_dataset(tmp.path()), dimension_error);
    const auto cropped = load_dataset(tmp.path(), 8);
    CHECK(cropped.size() == 4);
    for (const Image& img : cropped) {
        CHECK(img.height == 8);
        CHECK(img.width == 8);
    }

    TempDir empty("nodata");
    CHECK_THROWS_AS(load_dataset(empty.path()), format_error);
}

TEST_CASE("dataset splits are deterministic, disjoint, and exhaustive") {
    const DatasetSplit s = split_dataset(20, 0.25, 3);
    CHECK(s.val.size() == 5);
    CHECK(s.train.size() == 15);
    std::set<int> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    CHECK(all.size() == 20);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 19);

    const DatasetSplit again = split_dataset(20, 0.25, 3);
    CHECK(again.train == s.train);
    CHECK(again.val == s.val);
    const DatasetSplit other = split_dataset(20, 0.25, 4);
    CHECK(other.val != s.val);

    // clamping: never empty on either side
    const DatasetSplit tiny = split_dataset(2, 0.0, 0);
    CHECK(tiny.val.size() == 1);
    CHECK(tiny.train.size() == 1);
    const DatasetSplit one = split_dataset(1, 0.5, 0);
    CHECK(one.train == std::vector<int>{0});
    CHECK(one.val == std::vector<int>{0});
}
