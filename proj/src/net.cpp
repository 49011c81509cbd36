#include "sparsepaint/net.hpp"

#include <cmath>

#include "sparsepaint/errors.hpp"

namespace sparsepaint::net {

void NetConfig::validate() const {
    if (scales < 1) throw domain_error("scales must be at least 1");
    if (static_cast<int>(base_channels.size()) != scales) {
        throw dimension_error("base_channels length must equal scales");
    }
    for (int c : base_channels) {
        if (c < 3 || c % 3 != 0) throw domain_error("channel counts must be positive multiples of 3");
    }
    if (channels != 1 && channels != 3) throw dimension_error("channels must be 1 or 3");
    const int divisor = 1 << (scales - 1);
    if (image_size < divisor || image_size % divisor != 0) {
        throw dimension_error("image size must be divisible by 2^(scales-1)");
    }
}

namespace {

void fill_uniform(ad::Node* w, double limit, Rng& rng) {
    for (double& v : w->value.data) v = rng.uniform(-limit, limit);
}

ConvFilter conv_filter(ad::Graph& g, const std::string& name, int out_c, int in_c,
                       bool transposed, Rng& rng) {
    ConvFilter f;
    f.w = g.parameter(name + ".w", transposed ? ad::Shape{in_c, out_c, 5, 5}
                                              : ad::Shape{out_c, in_c, 5, 5});
    f.b = g.parameter(name + ".b", ad::Shape{1, out_c, 1, 1});
    fill_uniform(f.w, std::sqrt(6.0 / (in_c * 25.0)), rng);
    return f;
}

ConvFilter linear_filter(ad::Graph& g, const std::string& name, int out_c, int in_c, Rng& rng) {
    ConvFilter f;
    f.w = g.parameter(name + ".w", ad::Shape{out_c, in_c, 1, 1});
    f.b = g.parameter(name + ".b", ad::Shape{1, out_c, 1, 1});
    fill_uniform(f.w, std::sqrt(6.0 / in_c), rng);
    return f;
}

// Per-scale input channel counts implied by the block plan; shared between
// parameter creation and application.
struct ChannelPlan {
    std::vector<int> enc_in, enc_out, dec_in, dec_out;
};

ChannelPlan plan_channels(const NetConfig& cfg, int in_channels) {
    ChannelPlan plan;
    const auto& B = cfg.base_channels;
    const int S = cfg.scales;
    for (int s = 0; s < S; ++s) {
        plan.enc_in.push_back(s == 0 ? in_channels : B[s - 1]);
        plan.enc_out.push_back(B[s]);
    }
    for (int s = 0; s < S; ++s) {
        plan.dec_out.push_back(B[std::max(S - 2 - s, 0)]);
        // After every upsample the matching encoder output is concatenated,
        // doubling the next block's input.
        plan.dec_in.push_back(s == 0 ? B[S - 1] : 2 * plan.dec_out[s - 1]);
    }
    return plan;
}

} // namespace

HourglassParams make_hourglass_params(ad::Graph& g, const NetConfig& cfg, int in_channels,
                                      int out_channels, const std::string& prefix, Rng& rng) {
    cfg.validate();
    const ChannelPlan plan = plan_channels(cfg, in_channels);
    HourglassParams p;
    for (int s = 0; s < cfg.scales; ++s) {
        std::array<ConvFilter, 3> block;
        for (int br = 0; br < 3; ++br) {
            block[br] = conv_filter(g, prefix + ".enc" + std::to_string(s) + ".b" + std::to_string(br),
                                    plan.enc_out[s] / 3, plan.enc_in[s], false, rng);
        }
        p.enc.push_back(block);
    }
    for (int s = 0; s < cfg.scales; ++s) {
        std::array<ConvFilter, 3> block;
        for (int br = 0; br < 3; ++br) {
            block[br] = conv_filter(g, prefix + ".dec" + std::to_string(s) + ".b" + std::to_string(br),
                                    plan.dec_out[s] / 3, plan.dec_in[s], true, rng);
        }
        p.dec.push_back(block);
    }
    p.out = conv_filter(g, prefix + ".out", out_channels, plan.dec_out[cfg.scales - 1], true, rng);
    return p;
}

ad::Node* apply_hourglass(ad::Graph& g, const NetConfig& cfg, const HourglassParams& p,
                          ad::Node* input) {
    const int S = cfg.scales;
    std::vector<ad::Node*> skips; // pre-pool block outputs, shallowest first
    ad::Node* cur = input;
    for (int s = 0; s < S; ++s) {
        std::vector<ad::Node*> branches;
        for (int br = 0; br < 3; ++br) {
            branches.push_back(g.elu(g.conv2d(cur, p.enc[s][br].w, p.enc[s][br].b,
                                              kBranchDilations[br], 1)));
        }
        cur = g.concat_channels(branches);
        if (s < S - 1) {
            skips.push_back(cur);
            cur = g.maxpool2x2(cur);
        }
    }
    for (int s = 0; s < S; ++s) {
        std::vector<ad::Node*> branches;
        for (int br = 0; br < 3; ++br) {
            branches.push_back(g.elu(g.tconv2d(cur, p.dec[s][br].w, p.dec[s][br].b,
                                               kBranchDilations[br])));
        }
        cur = g.concat_channels(branches);
        if (s < S - 1) {
            cur = g.upsample2x2(cur);
            cur = g.concat_channels({cur, skips[S - 2 - s]});
        }
    }
    return g.hard_sigmoid(g.tconv2d(cur, p.out.w, p.out.b, 0));
}

DiscriminatorParams make_discriminator_params(ad::Graph& g, const NetConfig& cfg,
                                              const std::string& prefix, Rng& rng) {
    if (cfg.scales < 1) throw domain_error("scales must be at least 1");
    DiscriminatorParams p;
    int in_c = cfg.channels + 1;
    for (int s = 0; s < cfg.scales; ++s) {
        p.blocks.push_back(conv_filter(g, prefix + ".f" + std::to_string(s),
                                       cfg.base_channels[s], in_c, false, rng));
        in_c = cfg.base_channels[s];
    }
    p.head = linear_filter(g, prefix + ".head", 1, in_c, rng);
    return p;
}

ad::Node* apply_discriminator(ad::Graph& g, const NetConfig& cfg, const DiscriminatorParams& p,
                              ad::Node* image, ad::Node* mask_plane) {
    ad::Node* cur = g.concat_channels({image, mask_plane});
    for (int s = 0; s < cfg.scales; ++s) {
        cur = g.leaky_relu(g.conv2d(cur, p.blocks[s].w, p.blocks[s].b, 0, 2), 0.2);
    }
    return g.linear(g.global_avg_pool(cur), p.head.w, p.head.b);
}

std::vector<ad::Node*> param_nodes(const HourglassParams& p) {
    std::vector<ad::Node*> out;
    for (const auto& block : p.enc) {
        for (const auto& f : block) {
            out.push_back(f.w);
            out.push_back(f.b);
        }
    }
    for (const auto& block : p.dec) {
        for (const auto& f : block) {
            out.push_back(f.w);
            out.push_back(f.b);
        }
    }
    out.push_back(p.out.w);
    out.push_back(p.out.b);
    return out;
}

std::vector<ad::Node*> param_nodes(const DiscriminatorParams& p) {
    std::vector<ad::Node*> out;
    for (const auto& f : p.blocks) {
        out.push_back(f.w);
        out.push_back(f.b);
    }
    out.push_back(p.head.w);
    out.push_back(p.head.b);
    return out;
}

std::vector<ad::FilterRef> norm_filters(const DiscriminatorParams& p) {
    std::vector<ad::FilterRef> out;
    for (const auto& f : p.blocks) {
        for (int co = 0; co < f.w->value.shape.n; ++co) {
            out.push_back({&f.w->value, co, &f.b->value, co});
        }
    }
    for (int co = 0; co < p.head.w->value.shape.n; ++co) {
        out.push_back({&p.head.w->value, co, &p.head.b->value, co});
    }
    return out;
}

} // namespace sparsepaint::net
