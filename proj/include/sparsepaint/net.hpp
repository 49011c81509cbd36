#pragma once

#include <array>
#include <string>
#include <vector>

#include "sparsepaint/graph.hpp"
#include "sparsepaint/optim.hpp"
#include "sparsepaint/rng.hpp"

namespace sparsepaint::net {

// Dilation rates of the three parallel branches in every hourglass block.
inline constexpr int kBranchDilations[3] = {0, 2, 5};

struct NetConfig {
    int scales = 4;
    std::vector<int> base_channels = {48, 96, 192, 384};
    int image_size = 0;
    int channels = 1; // colour channels k

    void validate() const;
};

struct ConvFilter {
    ad::Node* w = nullptr;
    ad::Node* b = nullptr;
};

// Parameters of one encoder/decoder hourglass. enc/dec hold the three
// dilation branches per scale; `out` is the final transposed convolution.
struct HourglassParams {
    std::vector<std::array<ConvFilter, 3>> enc;
    std::vector<std::array<ConvFilter, 3>> dec;
    ConvFilter out;
};

struct DiscriminatorParams {
    std::vector<ConvFilter> blocks; // stride-2 convolutions
    ConvFilter head;                // affine map to the scalar score
};

// Creates named, initialised parameter tensors (uniform with the fan-in rule;
// zero biases). The generator takes 2k+1 input channels (seed map, mask
// plane, masked image); the mask network takes 2k (seed map, image).
HourglassParams make_hourglass_params(ad::Graph& g, const NetConfig& cfg, int in_channels,
                                      int out_channels, const std::string& prefix, Rng& rng);

// Encoder: `scales` blocks (convs + ELU + concat), pooling after every block
// but the deepest. Decoder mirrors it with transposed convs, upsampling after
// every block but the last, concatenating the matching pre-pool encoder
// output after each upsample. Ends in a transposed conv + hard sigmoid.
ad::Node* apply_hourglass(ad::Graph& g, const NetConfig& cfg, const HourglassParams& p,
                          ad::Node* input);

DiscriminatorParams make_discriminator_params(ad::Graph& g, const NetConfig& cfg,
                                              const std::string& prefix, Rng& rng);

// concat(image, mask plane) -> `scales` stride-2 conv + leaky-ReLU blocks ->
// global average pool -> affine scalar, no output activation.
ad::Node* apply_discriminator(ad::Graph& g, const NetConfig& cfg, const DiscriminatorParams& p,
                              ad::Node* image, ad::Node* mask_plane);

std::vector<ad::Node*> param_nodes(const HourglassParams& p);
std::vector<ad::Node*> param_nodes(const DiscriminatorParams& p);

// Per-output-channel filter handles (bias included) for weight normalisation.
std::vector<ad::FilterRef> norm_filters(const DiscriminatorParams& p);

} // namespace sparsepaint::net
