#include "sparsepaint/wgan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

#include "sparsepaint/dataset.hpp"
#include "sparsepaint/errors.hpp"
#include "sparsepaint/optim.hpp"

namespace sparsepaint::wgan {

namespace {

// Sub-stream tags for derive_seed; every consumer of randomness gets its own
// stream so adding draws to one never shifts another.
constexpr std::uint64_t kTagSplit = 1;
constexpr std::uint64_t kTagShuffle = 2;
constexpr std::uint64_t kTagSeedMaps = 3;
constexpr std::uint64_t kTagBinarize = 4;
constexpr std::uint64_t kTagRandomMasks = 5;
constexpr std::uint64_t kTagValSeedMaps = 6;
constexpr std::uint64_t kTagValBinarize = 7;
constexpr std::uint64_t kTagValRandomMasks = 8;
constexpr std::uint64_t kTagInitMask = 11;
constexpr std::uint64_t kTagInitGen = 12;
constexpr std::uint64_t kTagInitDisc = 13;
// Inference streams derived from the caller's seed.
constexpr std::uint64_t kTagInferMaps = 0;
constexpr std::uint64_t kTagInferBinarize = 1;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int meta_int(const ckpt::Checkpoint& c, const std::string& key) {
    const std::string& s = c.meta_value(key);
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw format_error("checkpoint meta '" + key + "' is not an integer: " + s);
    }
}

std::uint64_t meta_u64(const ckpt::Checkpoint& c, const std::string& key) {
    const std::string& s = c.meta_value(key);
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw format_error("checkpoint meta '" + key + "' is not an integer: " + s);
    }
}

double meta_f64(const ckpt::Checkpoint& c, const std::string& key) {
    const std::string& s = c.meta_value(key);
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw format_error("checkpoint meta '" + key + "' is not a number: " + s);
    }
}

bool meta_flag(const ckpt::Checkpoint& c, const std::string& key) {
    const std::string& s = c.meta_value(key);
    if (s == "1") return true;
    if (s == "0") return false;
    throw format_error("checkpoint meta '" + key + "' is not a flag: " + s);
}

void fill_uniform(ad::Tensor& t, Rng& rng) {
    for (double& v : t.data) v = rng.uniform();
}

// One i.i.d. coin-flip mask per sample, with per-sample density drawn
// uniformly from [lo, hi].
void fill_random_masks(ad::Tensor& t, Rng& rng, double lo, double hi) {
    const auto& s = t.shape;
    const std::int64_t per = s.count() / s.n;
    for (int n = 0; n < s.n; ++n) {
        const double density = rng.uniform(lo, hi);
        for (std::int64_t i = 0; i < per; ++i) {
            t.data[static_cast<std::size_t>(n) * per + i] = rng.uniform() < density ? 1.0 : 0.0;
        }
    }
}

double tensor_mean(const ad::Tensor& t) {
    double sum = 0.0;
    for (double v : t.data) sum += v;
    return sum / static_cast<double>(t.data.size());
}

void check_image_shape(const Image& img, const net::NetConfig& ncfg) {
    if (img.height != ncfg.image_size || img.width != ncfg.image_size ||
        img.channels != ncfg.channels) {
        throw dimension_error("image does not match the configured size and channel count");
    }
}

// The whole training computation as one graph. Section ids mark where the
// mask network, the generator, and the critic start, so per-step forwards
// re-evaluate only the suffix whose inputs changed.
struct TrainGraph {
    net::NetConfig ncfg;
    TrainMode mode;
    int batch;
    bool with_disc;

    ad::Graph g;
    Rng bin_rng{0};

    ad::Node* in_f = nullptr;
    ad::Node* in_rm = nullptr;   // joint mode
    ad::Node* in_rg = nullptr;
    ad::Node* in_mask = nullptr; // random-mask mode
    ad::Node* conf = nullptr;
    ad::Node* b = nullptr;
    ad::Node* u = nullptr;
    ad::Node* loss_d = nullptr;
    ad::Node* loss_g = nullptr;
    ad::Node* loss_m = nullptr;
    int sec_g = 0; // first node of the generator application
    int sec_d = 0; // first node of the critic application (or the losses)

    net::HourglassParams mp, gp;
    net::DiscriminatorParams dp;
    std::vector<ad::Node*> m_params, g_params, d_params;
    std::vector<char> mask_m, mask_g, mask_d;

    TrainGraph(const net::NetConfig& nc, const TrainConfig& tc, TrainMode mode_, int batch_,
               bool with_disc_)
        : ncfg(nc), mode(mode_), batch(batch_), with_disc(with_disc_) {
        const int S = ncfg.image_size;
        const int k = ncfg.channels;

        in_f = g.input("f", {batch, k, S, S});
        if (mode == TrainMode::joint) in_rm = g.input("r_m", {batch, k, S, S});
        in_rg = g.input("r_g", {batch, k, S, S});
        if (mode == TrainMode::random_mask) in_mask = g.input("mask", {batch, 1, S, S});

        Rng m_init(derive_seed(tc.seed, kTagInitMask));
        Rng g_init(derive_seed(tc.seed, kTagInitGen));
        Rng d_init(derive_seed(tc.seed, kTagInitDisc));
        if (mode == TrainMode::joint) {
            mp = net::make_hourglass_params(g, ncfg, 2 * k, 1, "m", m_init);
            m_params = net::param_nodes(mp);
        }
        gp = net::make_hourglass_params(g, ncfg, 2 * k + 1, k, "g", g_init);
        g_params = net::param_nodes(gp);
        if (with_disc) {
            dp = net::make_discriminator_params(g, ncfg, "d", d_init);
            d_params = net::param_nodes(dp);
        }

        if (mode == TrainMode::joint) {
            ad::Node* m_in = g.concat_channels({in_rm, in_f});
            conf = net::apply_hourglass(g, ncfg, mp, m_in);
            b = g.binarize(conf, tc.binarize, &bin_rng);
        } else {
            b = in_mask;
        }

        ad::Node* masked = g.mask_mul(in_f, b);
        ad::Node* g_in = g.concat_channels({in_rg, b, masked});
        sec_g = g.size();
        ad::Node* g_raw = net::apply_hourglass(g, ncfg, gp, g_in);
        u = g.blend(g_raw, in_f, b);

        sec_d = g.size();
        const double values = static_cast<double>(S) * S * k;
        const double mae_scale = tc.normalize_mae ? 1.0 / values : 1.0;
        const double density_denom = tc.density_over_spatial ? static_cast<double>(S) * S : values;

        ad::Node* d_u = nullptr;
        if (with_disc) {
            d_u = net::apply_discriminator(g, ncfg, dp, u, b);
            ad::Node* d_f = net::apply_discriminator(g, ncfg, dp, in_f, b);
            loss_d = g.mean_all(g.sub(d_u, d_f));
        }
        ad::Node* per_sample_mae = g.scale(g.sum_per_sample(g.abs(g.sub(in_f, u))), mae_scale);
        if (with_disc) {
            loss_g = g.mean_all(g.add(g.scale(d_u, -tc.alpha), per_sample_mae));
        }
        ad::Node* density = g.scale(g.sum_per_sample(b), 1.0 / density_denom);
        loss_m = g.mean_all(g.add(g.abs(g.add_const(density, -tc.density)),
                                  g.scale(per_sample_mae, tc.beta)));

        if (with_disc) {
            mask_d = g.path_mask(loss_d, {d_params.begin(), d_params.end()});
            mask_g = g.path_mask(loss_g, {g_params.begin(), g_params.end()});
            if (mode == TrainMode::joint) {
                mask_m = g.path_mask(loss_m, {m_params.begin(), m_params.end()});
            }
        }
    }

    void fill_batch_images(const std::vector<Image>& images, const std::vector<int>& idx) {
        for (std::size_t s = 0; s < idx.size(); ++s) {
            image_to_tensor(images[static_cast<std::size_t>(idx[s])], in_f->value,
                            static_cast<int>(s));
        }
    }
};

void load_params_from(const ckpt::Checkpoint& c, const std::vector<ad::Node*>& params) {
    for (ad::Node* p : params) {
        const ckpt::NamedTensor& t = c.tensor(p->name);
        const ad::Shape& s = p->value.shape;
        if (t.dims[0] != static_cast<std::uint32_t>(s.n) ||
            t.dims[1] != static_cast<std::uint32_t>(s.c) ||
            t.dims[2] != static_cast<std::uint32_t>(s.h) ||
            t.dims[3] != static_cast<std::uint32_t>(s.w)) {
            throw dimension_error("checkpoint tensor '" + p->name + "' has an unexpected shape");
        }
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            p->value.data[i] = static_cast<double>(t.data[i]);
        }
    }
}

// Copies parameters into the validation graph, rounding through float32 on
// the way: the validation loss is then computed with exactly the weights a
// saved checkpoint reproduces.
void copy_params_quantized(const std::vector<ad::Node*>& src, const std::vector<ad::Node*>& dst) {
    if (src.size() != dst.size()) throw dimension_error("parameter lists out of sync");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i]->name != dst[i]->name) throw dimension_error("parameter lists out of sync");
        const std::vector<double>& from = src[i]->value.data;
        std::vector<double>& to = dst[i]->value.data;
        for (std::size_t j = 0; j < from.size(); ++j) {
            to[j] = static_cast<double>(static_cast<float>(from[j]));
        }
    }
}

// Mean validation mask loss over the held-out images, evaluated one image at
// a time in index order with freshly seeded randomness streams.
double run_validation(TrainGraph& vg, const std::vector<Image>& images,
                      const std::vector<int>& val_idx, const TrainConfig& tcfg) {
    Rng maps(derive_seed(tcfg.seed, kTagValSeedMaps));
    Rng masks(derive_seed(tcfg.seed, kTagValRandomMasks));
    vg.bin_rng = Rng(derive_seed(tcfg.seed, kTagValBinarize));
    double sum = 0.0;
    for (int idx : val_idx) {
        image_to_tensor(images[static_cast<std::size_t>(idx)], vg.in_f->value, 0);
        if (vg.mode == TrainMode::joint) fill_uniform(vg.in_rm->value, maps);
        fill_uniform(vg.in_rg->value, maps);
        if (vg.mode == TrainMode::random_mask) {
            fill_random_masks(vg.in_mask->value, masks, tcfg.density_lo, tcfg.density_hi);
        }
        vg.g.forward();
        sum += vg.loss_m->value.data[0];
    }
    return sum / static_cast<double>(val_idx.size());
}

void push_tensor(ckpt::Checkpoint& c, const ad::Node* p) {
    ckpt::NamedTensor t;
    t.name = p->name;
    const ad::Shape& s = p->value.shape;
    t.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    t.data.reserve(p->value.data.size());
    for (double v : p->value.data) t.data.push_back(static_cast<float>(v));
    c.tensors.push_back(std::move(t));
}

ckpt::Checkpoint snapshot(const TrainGraph& tg, const TrainGraph& vg, const TrainConfig& tcfg,
                          int epoch, double val_loss) {
    ckpt::Checkpoint c;
    c.set_meta("mode", tg.mode == TrainMode::joint ? "joint" : "random_mask");
    c.set_meta("scales", std::to_string(tg.ncfg.scales));
    std::string channels_csv;
    for (std::size_t i = 0; i < tg.ncfg.base_channels.size(); ++i) {
        if (i) channels_csv += ',';
        channels_csv += std::to_string(tg.ncfg.base_channels[i]);
    }
    c.set_meta("base_channels", channels_csv);
    c.set_meta("image_size", std::to_string(tg.ncfg.image_size));
    c.set_meta("channels", std::to_string(tg.ncfg.channels));
    c.set_meta("alpha", fmt_double(tcfg.alpha));
    c.set_meta("beta", fmt_double(tcfg.beta));
    c.set_meta("density", fmt_double(tcfg.density));
    c.set_meta("lr", fmt_double(tcfg.lr));
    c.set_meta("batch", std::to_string(tcfg.batch));
    c.set_meta("epochs", std::to_string(tcfg.epochs));
    c.set_meta("n_critic", std::to_string(tcfg.n_critic));
    c.set_meta("seed", std::to_string(tcfg.seed));
    c.set_meta("binarize", binarize_mode_name(tcfg.binarize));
    c.set_meta("normalize_mae", tcfg.normalize_mae ? "1" : "0");
    c.set_meta("density_over_spatial", tcfg.density_over_spatial ? "1" : "0");
    c.set_meta("val_fraction", fmt_double(tcfg.val_fraction));
    c.set_meta("density_lo", fmt_double(tcfg.density_lo));
    c.set_meta("density_hi", fmt_double(tcfg.density_hi));
    c.set_meta("epoch", std::to_string(epoch));
    c.set_meta("val_mask_loss", fmt_double(val_loss));
    // The mask/generator weights come from the validation graph, which
    // already holds the float32-rounded values the stored loss was computed
    // with; float casts of those are exact.
    for (const ad::Node* p : vg.m_params) push_tensor(c, p);
    for (const ad::Node* p : vg.g_params) push_tensor(c, p);
    for (const ad::Node* p : tg.d_params) push_tensor(c, p);
    return c;
}

TrainResult run_training(const std::vector<Image>& images, const net::NetConfig& ncfg,
                         const TrainConfig& tcfg, TrainMode mode) {
    ncfg.validate();
    tcfg.validate();
    if (images.empty()) throw domain_error("training requires a non-empty dataset");
    for (const Image& img : images) check_image_shape(img, ncfg);

    const DatasetSplit split =
        split_dataset(static_cast<int>(images.size()), tcfg.val_fraction,
                      derive_seed(tcfg.seed, kTagSplit));
    const int batch_eff = std::min(tcfg.batch, static_cast<int>(split.train.size()));

    TrainGraph tg(ncfg, tcfg, mode, batch_eff, true);
    TrainGraph vg(ncfg, tcfg, mode, 1, false);

    tg.bin_rng = Rng(derive_seed(tcfg.seed, kTagBinarize));
    Rng shuffle_rng(derive_seed(tcfg.seed, kTagShuffle));
    Rng map_rng(derive_seed(tcfg.seed, kTagSeedMaps));
    Rng mask_rng(derive_seed(tcfg.seed, kTagRandomMasks));

    ad::AdamConfig acfg;
    acfg.lr = tcfg.lr;
    ad::AdamState st_m, st_g, st_d;
    const std::vector<ad::FilterRef> d_filters = net::norm_filters(tg.dp);

    TrainResult res;
    copy_params_quantized(tg.m_params, vg.m_params);
    copy_params_quantized(tg.g_params, vg.g_params);
    double best_val = run_validation(vg, images, split.val, tcfg);
    if (!std::isfinite(best_val)) {
        throw training_diverged("validation loss not finite at initialisation", 0, 0,
                                snapshot(tg, vg, tcfg, 0, best_val));
    }
    res.best = snapshot(tg, vg, tcfg, 0, best_val);
    res.best_epoch = 0;
    res.best_val_loss = best_val;
    ckpt::Checkpoint last_finite = res.best;

    std::vector<int> order = split.train;
    const int batches = static_cast<int>(order.size()) / batch_eff;
    std::vector<int> idx(static_cast<std::size_t>(batch_eff));

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(
                                        static_cast<std::uint64_t>(i)))]);
        }
        double sum_d = 0.0, sum_g = 0.0, sum_m = 0.0, sum_density = 0.0;
        for (int bi = 0; bi < batches; ++bi) {
            std::copy_n(order.begin() + static_cast<std::ptrdiff_t>(bi) * batch_eff, batch_eff,
                        idx.begin());
            tg.fill_batch_images(images, idx);
            if (mode == TrainMode::joint) fill_uniform(tg.in_rm->value, map_rng);
            fill_uniform(tg.in_rg->value, map_rng);
            if (mode == TrainMode::random_mask) {
                fill_random_masks(tg.in_mask->value, mask_rng, tcfg.density_lo, tcfg.density_hi);
            }

            // Critic steps. The first forward also draws this batch's mask.
            for (int kc = 0; kc < tcfg.n_critic; ++kc) {
                if (kc == 0) {
                    tg.g.forward();
                    const double dl = tg.loss_d->value.data[0];
                    const double gl = tg.loss_g->value.data[0];
                    const double ml = tg.loss_m->value.data[0];
                    if (!std::isfinite(dl) || !std::isfinite(gl) || !std::isfinite(ml)) {
                        throw training_diverged(
                            "loss not finite at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(bi),
                            epoch, bi, last_finite);
                    }
                    sum_d += dl;
                    sum_g += gl;
                    sum_m += ml;
                    sum_density += tensor_mean(tg.b->value);
                } else {
                    tg.g.forward_from(tg.sec_d);
                }
                tg.g.backward(tg.loss_d, tg.mask_d);
                ad::adam_step(tg.d_params, st_d, acfg);
                ad::weight_normalize(d_filters);
            }

            // Generator step against the updated critic.
            tg.g.forward_from(tg.sec_d);
            tg.g.backward(tg.loss_g, tg.mask_g);
            ad::adam_step(tg.g_params, st_g, acfg);

            // Mask network step against the updated generator.
            if (mode == TrainMode::joint) {
                tg.g.forward_from(tg.sec_g);
                tg.g.backward(tg.loss_m, tg.mask_m);
                ad::adam_step(tg.m_params, st_m, acfg);
            }
        }

        copy_params_quantized(tg.m_params, vg.m_params);
        copy_params_quantized(tg.g_params, vg.g_params);
        const double val = run_validation(vg, images, split.val, tcfg);
        if (!std::isfinite(val)) {
            throw training_diverged("validation loss not finite at epoch " + std::to_string(epoch),
                                    epoch, -1, last_finite);
        }

        EpochStats es;
        es.epoch = epoch;
        es.d_loss = sum_d / batches;
        es.g_loss = sum_g / batches;
        es.m_loss = sum_m / batches;
        es.val_mask_loss = val;
        es.density = sum_density / batches;
        res.log.push_back(es);

        ckpt::Checkpoint current = snapshot(tg, vg, tcfg, epoch, val);
        last_finite = current;
        if (val < best_val) {
            best_val = val;
            res.best = std::move(current);
            res.best_epoch = epoch;
            res.best_val_loss = val;
        }
    }
    return res;
}

} // namespace

void TrainConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw domain_error("alpha must be non-negative");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw domain_error("beta must be non-negative");
    if (!(density > 0.0) || !(density <= 1.0)) throw domain_error("density must lie in (0, 1]");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw domain_error("learning rate must be positive");
    if (batch < 1) throw domain_error("batch size must be at least 1");
    if (epochs < 0) throw domain_error("epoch count must be non-negative");
    if (n_critic < 1) throw domain_error("critic step count must be at least 1");
    if (!(val_fraction >= 0.0) || !(val_fraction < 1.0)) {
        throw domain_error("validation fraction must lie in [0, 1)");
    }
    if (!(density_lo > 0.0) || !(density_lo <= 1.0) || !(density_hi > 0.0) ||
        !(density_hi <= 1.0) || density_lo > density_hi) {
        throw domain_error("density range must satisfy 0 < lo <= hi <= 1");
    }
}

TrainResult train_joint(const std::vector<Image>& images, const net::NetConfig& ncfg,
                        const TrainConfig& tcfg) {
    return run_training(images, ncfg, tcfg, TrainMode::joint);
}

TrainResult train_random_masks(const std::vector<Image>& images, const net::NetConfig& ncfg,
                               const TrainConfig& tcfg) {
    return run_training(images, ncfg, tcfg, TrainMode::random_mask);
}

double evaluate_validation_loss(const ckpt::Checkpoint& c, const std::vector<Image>& images) {
    const net::NetConfig ncfg = net_config_from(c);
    const TrainConfig tcfg = train_config_from(c);
    const TrainMode mode = train_mode_from(c);
    if (images.empty()) throw domain_error("validation requires a non-empty dataset");
    for (const Image& img : images) check_image_shape(img, ncfg);
    const DatasetSplit split =
        split_dataset(static_cast<int>(images.size()), tcfg.val_fraction,
                      derive_seed(tcfg.seed, kTagSplit));
    TrainGraph vg(ncfg, tcfg, mode, 1, false);
    load_params_from(c, vg.m_params);
    load_params_from(c, vg.g_params);
    return run_validation(vg, images, split.val, tcfg);
}

struct MaskGenerator::Impl {
    net::NetConfig ncfg;
    std::uint64_t seed;
    ad::Graph g;
    Rng bin_rng{0};
    ad::Node* in_f = nullptr;
    ad::Node* in_rm = nullptr;
    ad::Node* b = nullptr;
    net::HourglassParams mp;

    Impl(const ckpt::Checkpoint& c, std::uint64_t seed_) : ncfg(net_config_from(c)), seed(seed_) {
        if (train_mode_from(c) != TrainMode::joint) {
            throw domain_error("checkpoint was trained without a mask generator");
        }
        const ad::BinarizationMode bmode = parse_binarize_mode(c.meta_value("binarize"));
        const int S = ncfg.image_size;
        const int k = ncfg.channels;
        in_f = g.input("f", {1, k, S, S});
        in_rm = g.input("r_m", {1, k, S, S});
        Rng init(0);
        mp = net::make_hourglass_params(g, ncfg, 2 * k, 1, "m", init);
        load_params_from(c, net::param_nodes(mp));
        ad::Node* m_in = g.concat_channels({in_rm, in_f});
        ad::Node* conf = net::apply_hourglass(g, ncfg, mp, m_in);
        b = g.binarize(conf, bmode, &bin_rng);
    }

    BinaryMask run(const Image& img) {
        check_image_shape(img, ncfg);
        image_to_tensor(img, in_f->value, 0);
        Rng maps(derive_seed(seed, kTagInferMaps));
        fill_uniform(in_rm->value, maps);
        bin_rng = Rng(derive_seed(seed, kTagInferBinarize));
        g.forward();
        return tensor_to_mask(b->value, 0);
    }
};

MaskGenerator::MaskGenerator(const ckpt::Checkpoint& c, std::uint64_t seed)
    : impl_(std::make_unique<Impl>(c, seed)) {}
MaskGenerator::~MaskGenerator() = default;
BinaryMask MaskGenerator::operator()(const Image& img) { return impl_->run(img); }

struct LearnedInpainter::Impl {
    net::NetConfig ncfg;
    std::uint64_t seed;
    ad::Graph g;
    ad::Node* in_f = nullptr;
    ad::Node* in_rg = nullptr;
    ad::Node* in_mask = nullptr;
    ad::Node* u = nullptr;
    net::HourglassParams gp;

    Impl(const ckpt::Checkpoint& c, std::uint64_t seed_) : ncfg(net_config_from(c)), seed(seed_) {
        const int S = ncfg.image_size;
        const int k = ncfg.channels;
        in_f = g.input("f", {1, k, S, S});
        in_rg = g.input("r_g", {1, k, S, S});
        in_mask = g.input("mask", {1, 1, S, S});
        Rng init(0);
        gp = net::make_hourglass_params(g, ncfg, 2 * k + 1, k, "g", init);
        load_params_from(c, net::param_nodes(gp));
        ad::Node* masked = g.mask_mul(in_f, in_mask);
        ad::Node* g_in = g.concat_channels({in_rg, in_mask, masked});
        ad::Node* g_raw = net::apply_hourglass(g, ncfg, gp, g_in);
        u = g.blend(g_raw, in_f, in_mask);
    }

    Image run(const Image& img, const BinaryMask& mask) {
        check_image_shape(img, ncfg);
        if (mask.height != img.height || mask.width != img.width) {
            throw dimension_error("mask dimensions do not match the image");
        }
        image_to_tensor(img, in_f->value, 0);
        mask_to_tensor(mask, in_mask->value, 0);
        Rng maps(derive_seed(seed, kTagInferMaps));
        fill_uniform(in_rg->value, maps);
        g.forward();
        return tensor_to_image(u->value, 0);
    }
};

LearnedInpainter::LearnedInpainter(const ckpt::Checkpoint& c, std::uint64_t seed)
    : impl_(std::make_unique<Impl>(c, seed)) {}
LearnedInpainter::~LearnedInpainter() = default;
Image LearnedInpainter::operator()(const Image& img, const BinaryMask& mask) {
    return impl_->run(img, mask);
}

BinaryMask generate_mask(const ckpt::Checkpoint& c, const Image& img, std::uint64_t seed) {
    MaskGenerator gen(c, seed);
    return gen(img);
}

Image inpaint_learned(const ckpt::Checkpoint& c, const Image& img, const BinaryMask& mask,
                      std::uint64_t seed) {
    LearnedInpainter inp(c, seed);
    return inp(img, mask);
}

namespace {

void check_batch_shapes(const ad::Tensor& u, const ad::Tensor& f, const ad::Tensor& b) {
    if (!(u.shape == f.shape)) throw dimension_error("candidate and reference shapes differ");
    if (b.shape.n != u.shape.n || b.shape.c != 1 || b.shape.h != u.shape.h ||
        b.shape.w != u.shape.w) {
        throw dimension_error("mask batch must be a one-channel plane per sample");
    }
    if (u.shape.n < 1) throw domain_error("empty batch");
}

double per_sample_abs_sum(const ad::Tensor& a, const ad::Tensor& b, int sample) {
    const std::int64_t per = a.shape.count() / a.shape.n;
    const std::size_t base = static_cast<std::size_t>(sample) * static_cast<std::size_t>(per);
    double sum = 0.0;
    for (std::int64_t i = 0; i < per; ++i) {
        sum += std::abs(a.data[base + static_cast<std::size_t>(i)] -
                        b.data[base + static_cast<std::size_t>(i)]);
    }
    return sum;
}

} // namespace

double discriminator_loss(const Critic& d, const ad::Tensor& u, const ad::Tensor& f,
                          const ad::Tensor& b) {
    check_batch_shapes(u, f, b);
    const std::vector<double> su = d(u, b);
    const std::vector<double> sf = d(f, b);
    double sum = 0.0;
    for (int s = 0; s < u.shape.n; ++s) sum += su[static_cast<std::size_t>(s)] - sf[static_cast<std::size_t>(s)];
    return sum / u.shape.n;
}

double generator_loss(const Critic& d, const ad::Tensor& u, const ad::Tensor& f,
                      const ad::Tensor& b, double alpha, bool normalize_mae) {
    check_batch_shapes(u, f, b);
    const std::vector<double> su = d(u, b);
    const double values = static_cast<double>(u.shape.count() / u.shape.n);
    double sum = 0.0;
    for (int s = 0; s < u.shape.n; ++s) {
        const double mae = per_sample_abs_sum(f, u, s) / (normalize_mae ? values : 1.0);
        sum += -alpha * su[static_cast<std::size_t>(s)] + mae;
    }
    return sum / u.shape.n;
}

double mask_loss(const ad::Tensor& b, const ad::Tensor& u, const ad::Tensor& f,
                 double target_density, double beta, bool normalize_mae,
                 bool density_over_spatial) {
    check_batch_shapes(u, f, b);
    const double values = static_cast<double>(u.shape.count() / u.shape.n);
    const double pixels = static_cast<double>(b.shape.count() / b.shape.n);
    const double denom = density_over_spatial ? pixels : values;
    double sum = 0.0;
    for (int s = 0; s < b.shape.n; ++s) {
        const std::int64_t per = b.shape.count() / b.shape.n;
        const std::size_t base = static_cast<std::size_t>(s) * static_cast<std::size_t>(per);
        double ones = 0.0;
        for (std::int64_t i = 0; i < per; ++i) ones += b.data[base + static_cast<std::size_t>(i)];
        const double mae = per_sample_abs_sum(f, u, s) / (normalize_mae ? values : 1.0);
        sum += std::abs(ones / denom - target_density) + beta * mae;
    }
    return sum / b.shape.n;
}

Critic make_critic(const ckpt::Checkpoint& c) {
    return [c](const ad::Tensor& images, const ad::Tensor& masks) {
        net::NetConfig ncfg = net_config_from(c);
        if (images.shape.c != ncfg.channels) {
            throw dimension_error("image batch channel count does not match the checkpoint");
        }
        if (masks.shape.n != images.shape.n || masks.shape.c != 1 ||
            masks.shape.h != images.shape.h || masks.shape.w != images.shape.w) {
            throw dimension_error("mask batch must be a one-channel plane per sample");
        }
        ad::Graph g;
        ad::Node* in_img = g.input("img", images.shape);
        ad::Node* in_mask = g.input("mask", masks.shape);
        Rng init(0);
        net::DiscriminatorParams dp = net::make_discriminator_params(g, ncfg, "d", init);
        load_params_from(c, net::param_nodes(dp));
        ad::Node* out = net::apply_discriminator(g, ncfg, dp, in_img, in_mask);
        in_img->value = images;
        in_mask->value = masks;
        g.forward();
        return out->value.data;
    };
}

net::NetConfig net_config_from(const ckpt::Checkpoint& c) {
    net::NetConfig ncfg;
    ncfg.scales = meta_int(c, "scales");
    ncfg.base_channels.clear();
    const std::string& csv = c.meta_value("base_channels");
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::string item = csv.substr(start, comma == std::string::npos ? std::string::npos
                                                                              : comma - start);
        try {
            std::size_t pos = 0;
            ncfg.base_channels.push_back(std::stoi(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw format_error("checkpoint meta 'base_channels' is malformed: " + csv);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    ncfg.image_size = meta_int(c, "image_size");
    ncfg.channels = meta_int(c, "channels");
    return ncfg;
}

TrainConfig train_config_from(const ckpt::Checkpoint& c) {
    TrainConfig tcfg;
    tcfg.alpha = meta_f64(c, "alpha");
    tcfg.beta = meta_f64(c, "beta");
    tcfg.density = meta_f64(c, "density");
    tcfg.lr = meta_f64(c, "lr");
    tcfg.batch = meta_int(c, "batch");
    tcfg.epochs = meta_int(c, "epochs");
    tcfg.n_critic = meta_int(c, "n_critic");
    tcfg.seed = meta_u64(c, "seed");
    tcfg.binarize = parse_binarize_mode(c.meta_value("binarize"));
    tcfg.normalize_mae = meta_flag(c, "normalize_mae");
    tcfg.density_over_spatial = meta_flag(c, "density_over_spatial");
    tcfg.val_fraction = meta_f64(c, "val_fraction");
    tcfg.density_lo = meta_f64(c, "density_lo");
    tcfg.density_hi = meta_f64(c, "density_hi");
    return tcfg;
}

TrainMode train_mode_from(const ckpt::Checkpoint& c) {
    const std::string& mode = c.meta_value("mode");
    if (mode == "joint") return TrainMode::joint;
    if (mode == "random_mask") return TrainMode::random_mask;
    throw format_error("checkpoint meta 'mode' is unknown: " + mode);
}

const char* binarize_mode_name(ad::BinarizationMode mode) {
    switch (mode) {
        case ad::BinarizationMode::hard_rounding: return "hard";
        case ad::BinarizationMode::stochastic_rounding: return "stochastic";
        case ad::BinarizationMode::additive_noise: return "noise";
    }
    throw domain_error("unknown binarization mode");
}

ad::BinarizationMode parse_binarize_mode(const std::string& name) {
    if (name == "hard") return ad::BinarizationMode::hard_rounding;
    if (name == "stochastic") return ad::BinarizationMode::stochastic_rounding;
    if (name == "noise") return ad::BinarizationMode::additive_noise;
    throw domain_error("unknown binarization mode: " + name);
}

void image_to_tensor(const Image& img, ad::Tensor& t, int sample) {
    if (t.shape.c != img.channels || t.shape.h != img.height || t.shape.w != img.width ||
        sample < 0 || sample >= t.shape.n) {
        throw dimension_error("tensor layout does not fit the image");
    }
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                t.at(sample, c, y, x) = img.at(y, x, c);
            }
        }
    }
}

Image tensor_to_image(const ad::Tensor& t, int sample) {
    if (sample < 0 || sample >= t.shape.n) throw dimension_error("sample index out of range");
    Image out(t.shape.h, t.shape.w, t.shape.c);
    for (int c = 0; c < out.channels; ++c) {
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                out.at(y, x, c) = t.at(sample, c, y, x);
            }
        }
    }
    return out;
}

void mask_to_tensor(const BinaryMask& mask, ad::Tensor& t, int sample) {
    if (t.shape.c != 1 || t.shape.h != mask.height || t.shape.w != mask.width || sample < 0 ||
        sample >= t.shape.n) {
        throw dimension_error("tensor layout does not fit the mask");
    }
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            t.at(sample, 0, y, x) = mask.at(y, x) ? 1.0 : 0.0;
        }
    }
}

BinaryMask tensor_to_mask(const ad::Tensor& t, int sample) {
    if (t.shape.c != 1) throw dimension_error("mask tensors have one channel");
    if (sample < 0 || sample >= t.shape.n) throw dimension_error("sample index out of range");
    BinaryMask mask(t.shape.h, t.shape.w);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            mask.at(y, x) = t.at(sample, 0, y, x) >= 0.5 ? 1 : 0;
        }
    }
    return mask;
}

} // namespace sparsepaint::wgan
