#pragma once

#include <string>
#include <vector>

#include "lesionseg/rng.hpp"
#include "lesionseg/tensor.hpp"

namespace lesionseg {

enum class NetMode { train, eval };

// Named tensor table holding every learnable weight/bias/gamma/beta plus the
// per-batch-norm running mean/var (non-learnable, name suffix .running_*).
using Params = TensorTable;

bool is_learnable(const std::string& name);

// ---------------------------------------------------------------------------
// Primitive ops. Forward functions return the output; backward functions take
// whatever the forward cached and the upstream gradient.
// Convention for conv2d is cross-correlation (no kernel flip), zero padding,
// out = (in + 2*pad - k) / stride + 1 with integer (floor) division.
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

struct ConvGrads {
    Tensor dx;
    Tensor dw;
    Tensor db;
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& dy);

// 2x2 max pooling, stride 2; spatial dims must be even. Ties break to the
// first element in row-major window order. argmax holds, per output element,
// the flat h*w index of the winning input pixel within its plane.
struct PoolResult {
    Tensor y;
    std::vector<int> argmax;
};
PoolResult maxpool2(const Tensor& x);
Tensor maxpool2_backward(const Tensor& dy, const std::vector<int>& argmax, int in_h, int in_w);

// 2x nearest-neighbour upsampling; backward sums each 2x2 replication group.
Tensor upsample_nearest2(const Tensor& x);
Tensor upsample_nearest2_backward(const Tensor& dy);

// 2x bilinear upsampling with half-pixel centers (used by the head to reach
// the input resolution without block artifacts); backward scatters each
// output gradient onto its source pixels with the interpolation weights.
Tensor upsample_bilinear2(const Tensor& x);
Tensor upsample_bilinear2_backward(const Tensor& dy, int in_h, int in_w);

struct BnCache {
    Tensor xhat;               // normalized activations
    std::vector<float> invstd; // per channel
};

// Train mode normalizes by batch statistics (population variance) and updates
// running stats as (1 - momentum) * running + momentum * batch. Eval mode uses
// the running stats. Train mode requires n*h*w >= 2 per channel.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, NetMode mode, float eps, float momentum,
                   BnCache* cache = nullptr);

struct BnGrads {
    Tensor dx;
    Tensor dgamma;
    Tensor dbeta;
};
BnGrads batchnorm2d_backward(const BnCache& cache, const Tensor& gamma, const Tensor& dy);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

Tensor sigmoid(const Tensor& x);
// Takes the sigmoid *output* y: dx = dy * y * (1 - y).
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

Tensor concat_channels(const std::vector<const Tensor*>& parts);

// ---------------------------------------------------------------------------
// The network: 7x7 stride-2 stem + max-pool, `depth` encoder stages of
// [3x3 conv + BN + ReLU] x2 + max-pool, a bottleneck pair, mirrored decoder
// stages (2x nearest upsample, 1x1 channel-halving conv, skip concat,
// [3x3 conv + BN + ReLU] x2), and a 1x1 head producing 1-channel logits at
// the input resolution. The final upsample to input resolution is bilinear.
// With hypercolumn on, every decoder stage output is upsampled to full
// resolution and concatenated before the head.
// ---------------------------------------------------------------------------

struct UNetConfig {
    int base_filters = 16;
    int depth = 3;
    bool hypercolumn = true;
    float bn_eps = 1e-5f;
    float bn_momentum = 0.1f;
};

// Activation cache for one conv + BN + ReLU unit.
struct CbrCache {
    Tensor x;        // conv input
    BnCache bn;
    Tensor pre_relu; // BN output
};

struct DecStageCache {
    Tensor upsampled; // reduce-conv input
    int reduced_c = 0;
    int skip_c = 0;
    CbrCache c1, c2;
};

struct UNetCache {
    CbrCache stem;
    std::vector<int> stem_argmax;
    int stem_pool_h = 0, stem_pool_w = 0;
    std::vector<CbrCache> enc1, enc2;       // per encoder stage
    std::vector<std::vector<int>> enc_argmax;
    std::vector<int> enc_pool_h, enc_pool_w;
    CbrCache bneck1, bneck2;
    std::vector<DecStageCache> dec;         // index s = stage depth - s (execution order)
    Tensor head_in;
};

class UNet {
public:
    UNet() = default;
    explicit UNet(UNetConfig cfg) : cfg_(cfg) {}

    // He-normal fan-in weights, zero biases, gamma=1, beta=0,
    // running mean 0 / var 1. Deterministic given the generator state.
    void init(Rng& rng);

    const UNetConfig& config() const { return cfg_; }
    Params& params() { return params_; }
    const Params& params() const { return params_; }

    // x must be (n, 3, H, W) with H and W divisible by 2^(depth+2) so every
    // max-pool sees even dims. Returns (n, 1, H, W) logits. Train mode
    // updates batch-norm running stats; pass a cache to enable backward.
    Tensor forward(const Tensor& x, NetMode mode, UNetCache* cache = nullptr);

    // Gradients for every learnable parameter, named like params().
    Params backward(const UNetCache& cache, const Tensor& dlogits) const;

    // Architecture is recoverable from parameter names/shapes (checkpoints
    // carry no explicit config). bn_eps/bn_momentum fall back to defaults.
    static UNetConfig infer_config(const Params& params);

private:
    UNetConfig cfg_;
    Params params_;
};

} // namespace lesionseg
