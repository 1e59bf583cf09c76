#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ego/imu.hpp"

namespace ego {

struct FusionDims {
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int gru_hidden = 32;
    int gru_layers = 2;
    int tokens_per_frame = 1;
    int max_segment_samples = 512;  // longer IMU segments are stride-subsampled

    int head_width() const { return d_model / n_heads; }
    void validate() const;
};

// Two affine maps with GELU between; no normalization layers.
struct FfnParams {
    Eigen::MatrixXd w1;  // d_model x d_ff
    Eigen::VectorXd b1;  // d_ff
    Eigen::MatrixXd w2;  // d_ff x d_model
    Eigen::VectorXd b2;  // d_model
};

// One GRU cell: packed gate order is (update z, reset r, candidate c).
struct GruCellParams {
    Eigen::MatrixXd w;  // 3H x input_width
    Eigen::MatrixXd u;  // 3H x H
    Eigen::VectorXd b;  // 3H
};

struct FusionParams {
    // gru[layer][direction]; direction 0 runs forward, 1 backward.
    std::vector<std::array<GruCellParams, 2>> gru;
    Eigen::MatrixXd out_proj;    // 2H x d_model
    Eigen::VectorXd out_bias;    // d_model
    Eigen::VectorXd start_token; // d_model

    Eigen::MatrixXd l1_wq_v, l1_wk_m, l1_wv_m;  // vision queries motion
    Eigen::MatrixXd l1_wq_m, l1_wk_v, l1_wv_v;  // motion queries vision
    FfnParams l1_ffn_v, l1_ffn_m;
    Eigen::MatrixXd l2_wq, l2_wk, l2_wv;        // vision queries motion again
    FfnParams l2_ffn;

    // Xavier-uniform projections, orthogonal recurrent blocks, zero biases,
    // N(0, 0.02^2) start token; fully determined by (dims, seed).
    static FusionParams init(const FusionDims& dims, std::uint64_t seed);
    static FusionParams zeros(const FusionDims& dims);
};

// Reference to one named parameter tensor, used for serialization, gradient
// pairing and finite-difference sweeps. Order is stable across calls.
struct TensorRef {
    std::string name;
    double* data;
    long rows;
    long cols;
    long size() const { return rows * cols; }
};
std::vector<TensorRef> tensor_refs(FusionParams& params);

// Rows are tokens; positions[i] is the keyframe ordinal of row i (tokens of
// one keyframe share the index, and the paired motion token uses it too).
struct TokenMatrix {
    Eigen::MatrixXd data;
    std::vector<std::int64_t> positions;
};

// Bidirectional 2-layer GRU over one IMU segment; the motion token is the
// projected concatenation of the top layer's forward-final and
// backward-final hidden states. Throws on an empty segment.
Eigen::VectorXd encode_segment(std::span<const ImuSample> segment, const FusionParams& params,
                               const FusionDims& dims);

// Pairwise rotation of coordinates (2k, 2k+1) by position * base^(-2k/width),
// base 10000. Requires even size.
Eigen::VectorXd rope_rotate(const Eigen::VectorXd& head_vec, std::int64_t position);

// Motion tokens for one keyframe list: the first keyframe takes the learnable
// start token, later ones encode the IMU segment since their predecessor.
struct KeyframeRecord;  // from cascade.hpp
TokenMatrix build_motion_tokens(const std::vector<KeyframeRecord>& records,
                                const ImuSequence& imu, const FusionParams& params,
                                const FusionDims& dims);

// Bidirectional cross-attention + FFN with residuals; both outputs read the
// original inputs. RoPE is applied to queries and keys of every head.
struct Layer1Out {
    TokenMatrix v_prime;
    TokenMatrix m_prime;
};
Layer1Out fuse_layer1(const TokenMatrix& v, const TokenMatrix& m, const FusionParams& params,
                      const FusionDims& dims);

// Unidirectional layer: vision queries motion; motion tokens are dropped.
TokenMatrix fuse_layer2(const TokenMatrix& v_prime, const TokenMatrix& m_prime,
                        const FusionParams& params, const FusionDims& dims);

// build_motion_tokens -> fuse_layer1 -> fuse_layer2. segments[i] is the IMU
// span between keyframes i and i+1 (so N keyframes need N-1 segments).
TokenMatrix fusion_forward(const TokenMatrix& v, const std::vector<std::vector<ImuSample>>& segments,
                           const FusionParams& params, const FusionDims& dims);

// Reverse-mode gradients of loss = sum(V_bar^2) for every parameter tensor.
struct FusionGradResult {
    double loss = 0.0;
    TokenMatrix v_bar;
    FusionParams grads;
};
FusionGradResult fusion_grad(const TokenMatrix& v,
                             const std::vector<std::vector<ImuSample>>& segments,
                             const FusionParams& params, const FusionDims& dims);

// Named-tensor container: raw row-major doubles plus a JSON manifest that
// records dims and per-tensor shapes/offsets.
void save_fusion_params(const FusionParams& params, const FusionDims& dims,
                        const std::string& bin_path, const std::string& manifest_path);
struct LoadedFusionParams {
    FusionParams params;
    FusionDims dims;
};
LoadedFusionParams load_fusion_params(const std::string& bin_path,
                                      const std::string& manifest_path);

// Invariant + finite-difference verification used by tests and the CLI.
struct FusionCheckOptions {
    FusionDims dims{16, 2, 64, 8, 2, 1, 512};
    std::uint64_t seed = 1;
    double fd_epsilon = 1e-5;
    double fd_tolerance = 1e-4;
    int n_keyframes = 3;
    int max_segment_len = 5;
};
struct FusionCheckReport {
    struct Line {
        std::string name;
        bool pass;
        double value;
    };
    std::vector<Line> lines;
    bool all_pass = true;
};
FusionCheckReport run_fusion_checks(const FusionCheckOptions& options);

}  // namespace ego
