#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sparsepaint/rng.hpp"
#include "sparsepaint/tensor.hpp"

namespace sparsepaint::ad {

enum class BinarizationMode { hard_rounding, stochastic_rounding, additive_noise };

class Graph;

// One operator application. Nodes are created and wired once; afterwards the
// graph is evaluated repeatedly with new input/parameter values.
class Node {
public:
    virtual ~Node() = default;

    // Recomputes `value` from the inputs' values.
    virtual void forward() {}
    // Accumulates d(loss)/d(input) into each wanted input's grad buffer,
    // given d(loss)/d(value) in this->grad.
    virtual void backward() {}
    virtual const char* kind() const = 0;

    int id = -1;
    std::string name;
    std::vector<Node*> inputs;
    Tensor value;
    Tensor grad;
    bool trainable = false;        // parameter leaf
    bool grad_wanted = false;      // set per backward pass by the graph
    bool grad_ready = false;       // grad buffer valid in the current pass
    bool straight_through = false; // backward is an estimator, not a derivative

protected:
    // Zeroes the buffer on first touch within a pass, then hands it out.
    static Tensor* grad_sink(Node* input);
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::int64_t checked_elements = 0;
    // Leaves every one of whose paths to the output crosses a binarization
    // node; finite differences see the discrete jump there, so they are
    // skipped rather than compared against the straight-through gradient.
    std::vector<std::string> excluded_leaves;
    bool straight_through_present = false;
};

// Define-once, evaluate-many computation graph. Nodes are stored in
// topological order (construction order); backward walks the exact reverse.
class Graph {
public:
    // Leaves.
    Node* input(const std::string& name, Shape shape);
    Node* parameter(const std::string& name, Shape shape);

    // Convolutions. Weight layouts: conv (out, in, 5, 5); tconv (in, out, 5, 5)
    // so that <conv(x,w), y> == <x, tconv(y,w)> exactly. `dilation` follows the
    // convention that 0 means a dense kernel; sample spacing is max(dilation,1)
    // and padding 2*spacing keeps spatial size at stride 1. bias may be null.
    Node* conv2d(Node* x, Node* w, Node* bias, int dilation, int stride);
    Node* tconv2d(Node* x, Node* w, Node* bias, int dilation);

    Node* maxpool2x2(Node* x);
    Node* upsample2x2(Node* x);
    Node* concat_channels(std::vector<Node*> xs);

    Node* elu(Node* x);
    Node* leaky_relu(Node* x, double slope = 0.2);
    Node* hard_sigmoid(Node* x);

    // Rounds confidences to a binary tensor; backward is the identity
    // (straight-through). Stochastic modes draw from *rng in flat element
    // order. Inputs outside [0,1] are a domain_error.
    Node* binarize(Node* c, BinarizationMode mode, Rng* rng);

    // mask has one channel and broadcasts across x's channels.
    Node* mask_mul(Node* x, Node* mask);
    // (1-mask)*a + mask*b, channel-broadcast mask; exact at binary masks.
    Node* blend(Node* a, Node* b, Node* mask);

    Node* global_avg_pool(Node* x);
    // x: (n, in, 1, 1), w: (out, in, 1, 1), bias: (1, out, 1, 1) or null.
    Node* linear(Node* x, Node* w, Node* bias);

    Node* abs(Node* x);
    Node* add(Node* a, Node* b);
    Node* sub(Node* a, Node* b);
    Node* scale(Node* x, double k);
    Node* add_const(Node* x, double k);
    // (n,c,h,w) -> (n,1,1,1), summing each sample.
    Node* sum_per_sample(Node* x);
    // (n,c,h,w) -> (1,1,1,1), mean over every element.
    Node* mean_all(Node* x);

    void forward();
    // Recomputes nodes with id >= first_id (their inputs must be unchanged).
    void forward_from(int first_id);

    // True at [v] when v lies on a path from any of `targets` to `loss`;
    // backward() skips everything else.
    std::vector<char> path_mask(const Node* loss, const std::vector<const Node*>& targets) const;

    // Reverse-mode pass. loss must be scalar. Every node flagged in `wanted`
    // receives a gradient; pass an empty mask to differentiate w.r.t. all
    // trainable leaves.
    void backward(Node* loss, const std::vector<char>& wanted = {});

    std::vector<Node*> trainable_nodes() const;
    const std::vector<std::unique_ptr<Node>>& nodes() const { return nodes_; }
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    Node* adopt(std::unique_ptr<Node> node);
    std::vector<std::unique_ptr<Node>> nodes_;
};

// Compares reverse-mode gradients of `loss` w.r.t. every reachable leaf
// (parameters and inputs) against central finite differences with step h.
// Leaves reachable only through binarization nodes are excluded and named in
// the report. Throws dimension_error if loss is not scalar.
// max_elements_per_leaf caps the probes per leaf (0 = all), sampling a
// deterministic stride.
GradCheckReport grad_check(Graph& g, Node* loss, double h, int max_elements_per_leaf = 0);

} // namespace sparsepaint::ad
