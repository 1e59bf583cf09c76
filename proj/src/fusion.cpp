#include "ego/fusion.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ego/cascade.hpp"
#include "ego/errors.hpp"
#include "ego/rng.hpp"

namespace ego {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kRopeBase = 10000.0;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

// In-place RoPE over every head block of a token-row matrix. sign = -1 undoes
// the rotation, which is also the backward map.
void rope_rows(MatrixXd& m, const std::vector<std::int64_t>& positions, int head_width,
               double sign) {
    const int n_heads = static_cast<int>(m.cols()) / head_width;
    for (long i = 0; i < m.rows(); ++i) {
        const double pos = static_cast<double>(positions[static_cast<std::size_t>(i)]);
        for (int h = 0; h < n_heads; ++h) {
            for (int k = 0; k < head_width / 2; ++k) {
                const double angle =
                    sign * pos * std::pow(kRopeBase, -2.0 * k / head_width);
                const double c = std::cos(angle);
                const double s = std::sin(angle);
                const int j = h * head_width + 2 * k;
                const double x0 = m(i, j);
                const double x1 = m(i, j + 1);
                m(i, j) = c * x0 - s * x1;
                m(i, j + 1) = s * x0 + c * x1;
            }
        }
    }
}

struct AttnCache {
    MatrixXd q_in, k_in, v_in;
    MatrixXd qp, kp, vp;  // projected
    MatrixXd qr, kr;      // after RoPE
    std::vector<MatrixXd> weights;  // per-head softmax rows, n x m
    MatrixXd out;
};

MatrixXd attn_forward(const MatrixXd& q_in, const MatrixXd& k_in, const MatrixXd& v_in,
                      const MatrixXd& wq, const MatrixXd& wk, const MatrixXd& wv,
                      const std::vector<std::int64_t>& pos_q,
                      const std::vector<std::int64_t>& pos_k, const FusionDims& dims,
                      AttnCache* cache) {
    const int dh = dims.head_width();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    MatrixXd qp = q_in * wq;
    MatrixXd kp = k_in * wk;
    MatrixXd vp = v_in * wv;
    MatrixXd qr = qp;
    MatrixXd kr = kp;
    rope_rows(qr, pos_q, dh, 1.0);
    rope_rows(kr, pos_k, dh, 1.0);

    MatrixXd out(q_in.rows(), dims.d_model);
    std::vector<MatrixXd> weights(dims.n_heads);
    for (int h = 0; h < dims.n_heads; ++h) {
        const auto qh = qr.middleCols(h * dh, dh);
        const auto kh = kr.middleCols(h * dh, dh);
        MatrixXd scores = scale * (qh * kh.transpose());
        for (long i = 0; i < scores.rows(); ++i) {
            const double m = scores.row(i).maxCoeff();
            scores.row(i) = (scores.row(i).array() - m).exp();
            scores.row(i) /= scores.row(i).sum();
        }
        out.middleCols(h * dh, dh) = scores * vp.middleCols(h * dh, dh);
        weights[h] = std::move(scores);
    }

    if (cache) {
        cache->q_in = q_in;
        cache->k_in = k_in;
        cache->v_in = v_in;
        cache->qp = std::move(qp);
        cache->kp = std::move(kp);
        cache->vp = std::move(vp);
        cache->qr = std::move(qr);
        cache->kr = std::move(kr);
        cache->weights = std::move(weights);
        cache->out = out;
    }
    return out;
}

struct AttnGrads {
    MatrixXd d_wq, d_wk, d_wv;
    MatrixXd d_q_in, d_k_in, d_v_in;
};

AttnGrads attn_backward(const AttnCache& cache, const MatrixXd& d_out, const MatrixXd& wq,
                        const MatrixXd& wk, const MatrixXd& wv,
                        const std::vector<std::int64_t>& pos_q,
                        const std::vector<std::int64_t>& pos_k, const FusionDims& dims) {
    const int dh = dims.head_width();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    MatrixXd d_qr = MatrixXd::Zero(cache.qr.rows(), cache.qr.cols());
    MatrixXd d_kr = MatrixXd::Zero(cache.kr.rows(), cache.kr.cols());
    MatrixXd d_vp = MatrixXd::Zero(cache.vp.rows(), cache.vp.cols());

    for (int h = 0; h < dims.n_heads; ++h) {
        const MatrixXd& a = cache.weights[h];
        const auto d_oh = d_out.middleCols(h * dh, dh);
        const auto vh = cache.vp.middleCols(h * dh, dh);
        const MatrixXd d_a = d_oh * vh.transpose();
        d_vp.middleCols(h * dh, dh) = a.transpose() * d_oh;

        const VectorXd row_dot = (a.array() * d_a.array()).rowwise().sum();
        MatrixXd d_scores =
            (a.array() * (d_a.array().colwise() - row_dot.array())).matrix();
        d_scores *= scale;

        d_qr.middleCols(h * dh, dh) = d_scores * cache.kr.middleCols(h * dh, dh);
        d_kr.middleCols(h * dh, dh) = d_scores.transpose() * cache.qr.middleCols(h * dh, dh);
    }

    rope_rows(d_qr, pos_q, dh, -1.0);
    rope_rows(d_kr, pos_k, dh, -1.0);

    AttnGrads g;
    g.d_wq = cache.q_in.transpose() * d_qr;
    g.d_wk = cache.k_in.transpose() * d_kr;
    g.d_wv = cache.v_in.transpose() * d_vp;
    g.d_q_in = d_qr * wq.transpose();
    g.d_k_in = d_kr * wk.transpose();
    g.d_v_in = d_vp * wv.transpose();
    return g;
}

struct FfnCache {
    MatrixXd x, h1, g;
};

MatrixXd ffn_forward(const MatrixXd& x, const FfnParams& p, FfnCache* cache) {
    MatrixXd h1 = x * p.w1;
    h1.rowwise() += p.b1.transpose();
    MatrixXd g = h1.unaryExpr([](double v) { return gelu(v); });
    MatrixXd y = g * p.w2;
    y.rowwise() += p.b2.transpose();
    if (cache) {
        cache->x = x;
        cache->h1 = std::move(h1);
        cache->g = std::move(g);
    }
    return y;
}

MatrixXd ffn_backward(const FfnCache& cache, const MatrixXd& d_y, const FfnParams& p,
                      FfnParams& grads) {
    grads.w2 += cache.g.transpose() * d_y;
    grads.b2 += d_y.colwise().sum().transpose();
    MatrixXd d_g = d_y * p.w2.transpose();
    MatrixXd d_h1 =
        d_g.array() * cache.h1.unaryExpr([](double v) { return gelu_grad(v); }).array();
    grads.w1 += cache.x.transpose() * d_h1;
    grads.b1 += d_h1.colwise().sum().transpose();
    return d_h1 * p.w1.transpose();
}

// ---------------------------------------------------------------------------
// GRU

struct GruStepCache {
    VectorXd x, h_prev, z, r, c, rh;
};

struct GruSegmentCache {
    // inputs[l] has one column per time index; layer 0 holds the raw samples.
    std::vector<MatrixXd> inputs;
    // steps[l][dir] in processing order (forward: 0..L-1, backward: L-1..0).
    std::vector<std::array<std::vector<GruStepCache>, 2>> steps;
    VectorXd hcat;   // [fwd final; bwd final] of the top layer
    VectorXd token;
};

VectorXd gru_cell_step(const GruCellParams& p, const VectorXd& x, const VectorXd& h, int hidden,
                       GruStepCache* cache) {
    const VectorXd gx = p.w * x + p.b;
    const VectorXd z =
        (gx.segment(0, hidden) + p.u.middleRows(0, hidden) * h).unaryExpr([](double v) {
            return sigmoid(v);
        });
    const VectorXd r =
        (gx.segment(hidden, hidden) + p.u.middleRows(hidden, hidden) * h).unaryExpr([](double v) {
            return sigmoid(v);
        });
    const VectorXd rh = r.cwiseProduct(h);
    const VectorXd c =
        (gx.segment(2 * hidden, hidden) + p.u.middleRows(2 * hidden, hidden) * rh)
            .unaryExpr([](double v) { return std::tanh(v); });
    VectorXd h_next = (VectorXd::Ones(hidden) - z).cwiseProduct(h) + z.cwiseProduct(c);
    if (cache) {
        cache->x = x;
        cache->h_prev = h;
        cache->z = z;
        cache->r = r;
        cache->c = c;
        cache->rh = rh;
    }
    return h_next;
}

VectorXd gru_forward(const MatrixXd& sample_cols, const FusionParams& params,
                     const FusionDims& dims, GruSegmentCache* cache) {
    const int hidden = dims.gru_hidden;
    const long len = sample_cols.cols();
    MatrixXd layer_in = sample_cols;
    VectorXd h_fwd_final, h_bwd_final;

    if (cache) {
        cache->inputs.clear();
        cache->steps.assign(dims.gru_layers, {});
    }

    for (int l = 0; l < dims.gru_layers; ++l) {
        if (cache) cache->inputs.push_back(layer_in);
        MatrixXd layer_out(2 * hidden, len);
        for (int dir = 0; dir < 2; ++dir) {
            const GruCellParams& cell = params.gru[l][dir];
            VectorXd h = VectorXd::Zero(hidden);
            std::vector<GruStepCache>* steps = cache ? &cache->steps[l][dir] : nullptr;
            if (steps) steps->resize(len);
            for (long k = 0; k < len; ++k) {
                const long t = dir == 0 ? k : len - 1 - k;
                h = gru_cell_step(cell, layer_in.col(t), h, hidden,
                                  steps ? &(*steps)[k] : nullptr);
                layer_out.col(t).segment(dir * hidden, hidden) = h;
            }
            if (l == dims.gru_layers - 1) {
                (dir == 0 ? h_fwd_final : h_bwd_final) = h;
            }
        }
        layer_in = std::move(layer_out);
    }

    VectorXd hcat(2 * hidden);
    hcat << h_fwd_final, h_bwd_final;
    VectorXd token = params.out_proj.transpose() * hcat + params.out_bias;
    if (cache) {
        cache->hcat = hcat;
        cache->token = token;
    }
    return token;
}

void gru_backward(const GruSegmentCache& cache, const VectorXd& d_token,
                  const FusionParams& params, const FusionDims& dims, FusionParams& grads) {
    const int hidden = dims.gru_hidden;
    const long len = cache.inputs.front().cols();

    grads.out_proj += cache.hcat * d_token.transpose();
    grads.out_bias += d_token;
    const VectorXd d_hcat = params.out_proj * d_token;

    // d_out[l] carries the gradient of layer l's per-time output.
    MatrixXd d_out = MatrixXd::Zero(2 * hidden, len);
    d_out.col(len - 1).segment(0, hidden) = d_hcat.segment(0, hidden);
    d_out.col(0).segment(hidden, hidden) = d_hcat.segment(hidden, hidden);

    for (int l = dims.gru_layers - 1; l >= 0; --l) {
        const long in_width = cache.inputs[static_cast<std::size_t>(l)].rows();
        MatrixXd d_in = MatrixXd::Zero(in_width, len);
        for (int dir = 0; dir < 2; ++dir) {
            const GruCellParams& cell = params.gru[l][dir];
            GruCellParams& gcell = grads.gru[l][dir];
            const auto& steps = cache.steps[l][dir];
            VectorXd dh = VectorXd::Zero(hidden);
            for (long k = len - 1; k >= 0; --k) {
                const long t = dir == 0 ? k : len - 1 - k;
                const GruStepCache& s = steps[static_cast<std::size_t>(k)];
                const VectorXd dh_total = dh + d_out.col(t).segment(dir * hidden, hidden);

                const VectorXd dc = dh_total.cwiseProduct(s.z);
                const VectorXd dz = dh_total.cwiseProduct(s.c - s.h_prev);
                VectorXd dh_prev =
                    dh_total.cwiseProduct(VectorXd::Ones(hidden) - s.z);

                const VectorXd da_c =
                    dc.cwiseProduct(VectorXd::Ones(hidden) - s.c.cwiseProduct(s.c));
                gcell.w.middleRows(2 * hidden, hidden) += da_c * s.x.transpose();
                gcell.u.middleRows(2 * hidden, hidden) += da_c * s.rh.transpose();
                gcell.b.segment(2 * hidden, hidden) += da_c;
                const VectorXd drh = cell.u.middleRows(2 * hidden, hidden).transpose() * da_c;
                const VectorXd dr = drh.cwiseProduct(s.h_prev);
                dh_prev += drh.cwiseProduct(s.r);

                const VectorXd da_z =
                    dz.cwiseProduct(s.z).cwiseProduct(VectorXd::Ones(hidden) - s.z);
                const VectorXd da_r =
                    dr.cwiseProduct(s.r).cwiseProduct(VectorXd::Ones(hidden) - s.r);
                gcell.w.middleRows(0, hidden) += da_z * s.x.transpose();
                gcell.u.middleRows(0, hidden) += da_z * s.h_prev.transpose();
                gcell.b.segment(0, hidden) += da_z;
                gcell.w.middleRows(hidden, hidden) += da_r * s.x.transpose();
                gcell.u.middleRows(hidden, hidden) += da_r * s.h_prev.transpose();
                gcell.b.segment(hidden, hidden) += da_r;

                dh_prev += cell.u.middleRows(0, hidden).transpose() * da_z;
                dh_prev += cell.u.middleRows(hidden, hidden).transpose() * da_r;

                d_in.col(t) += cell.w.middleRows(0, hidden).transpose() * da_z;
                d_in.col(t) += cell.w.middleRows(hidden, hidden).transpose() * da_r;
                d_in.col(t) += cell.w.middleRows(2 * hidden, hidden).transpose() * da_c;

                dh = dh_prev;
            }
        }
        d_out = std::move(d_in);  // becomes the output gradient of layer l-1
    }
}

MatrixXd segment_to_columns(std::span<const ImuSample> segment, const FusionDims& dims) {
    if (segment.empty()) throw ValidationError("encode_segment: empty segment");
    std::vector<std::size_t> keep;
    if (static_cast<int>(segment.size()) > dims.max_segment_samples) {
        const std::size_t stride =
            (segment.size() + dims.max_segment_samples - 1) / dims.max_segment_samples;
        for (std::size_t i = 0; i < segment.size(); i += stride) keep.push_back(i);
    } else {
        keep.resize(segment.size());
        for (std::size_t i = 0; i < segment.size(); ++i) keep[i] = i;
    }
    MatrixXd cols(6, static_cast<long>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        const ImuSample& s = segment[keep[j]];
        cols.col(static_cast<long>(j)) << s.gyro, s.accel;
    }
    return cols;
}

// ---------------------------------------------------------------------------
// Full pipeline with caches

struct ForwardCache {
    std::vector<GruSegmentCache> segments;
    TokenMatrix m;
    AttnCache a1v, a1m;
    FfnCache f1v, f1m;
    TokenMatrix v_prime, m_prime;
    AttnCache a2;
    FfnCache f2;
    TokenMatrix v_bar;
};

std::vector<std::int64_t> frame_positions(const TokenMatrix& v, const FusionDims& dims) {
    const long rows = v.data.rows();
    if (static_cast<long>(v.positions.size()) != rows) {
        throw ValidationError("TokenMatrix: positions size must match row count");
    }
    if (rows % dims.tokens_per_frame != 0) {
        throw ValidationError("TokenMatrix: rows not divisible by tokens_per_frame");
    }
    const long n = rows / dims.tokens_per_frame;
    std::vector<std::int64_t> out(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const long base = i * dims.tokens_per_frame;
        for (int j = 1; j < dims.tokens_per_frame; ++j) {
            if (v.positions[base + j] != v.positions[base]) {
                throw ValidationError("TokenMatrix: tokens of one frame must share a position");
            }
        }
        if (i > 0 && v.positions[base] < out[i - 1]) {
            throw ValidationError("TokenMatrix: positions must be nondecreasing");
        }
        out[static_cast<std::size_t>(i)] = v.positions[base];
    }
    return out;
}

void check_width(const TokenMatrix& m, const FusionDims& dims, const char* what) {
    if (m.data.cols() != dims.d_model) {
        throw ValidationError(std::string(what) + ": token width does not match d_model");
    }
    if (static_cast<long>(m.positions.size()) != m.data.rows()) {
        throw ValidationError(std::string(what) + ": positions size does not match row count");
    }
    if (m.data.rows() == 0) {
        throw ValidationError(std::string(what) + ": empty token matrix");
    }
}

Layer1Out layer1_forward(const TokenMatrix& v, const TokenMatrix& m, const FusionParams& p,
                         const FusionDims& dims, ForwardCache* cache) {
    check_width(v, dims, "fuse_layer1");
    check_width(m, dims, "fuse_layer1");
    const MatrixXd av = attn_forward(v.data, m.data, m.data, p.l1_wq_v, p.l1_wk_m, p.l1_wv_m,
                                     v.positions, m.positions, dims, cache ? &cache->a1v : nullptr);
    const MatrixXd fv = ffn_forward(av, p.l1_ffn_v, cache ? &cache->f1v : nullptr);
    const MatrixXd am = attn_forward(m.data, v.data, v.data, p.l1_wq_m, p.l1_wk_v, p.l1_wv_v,
                                     m.positions, v.positions, dims, cache ? &cache->a1m : nullptr);
    const MatrixXd fm = ffn_forward(am, p.l1_ffn_m, cache ? &cache->f1m : nullptr);
    Layer1Out out;
    out.v_prime = {v.data + fv, v.positions};
    out.m_prime = {m.data + fm, m.positions};
    return out;
}

TokenMatrix layer2_forward(const TokenMatrix& vp, const TokenMatrix& mp, const FusionParams& p,
                           const FusionDims& dims, ForwardCache* cache) {
    check_width(vp, dims, "fuse_layer2");
    check_width(mp, dims, "fuse_layer2");
    const MatrixXd a = attn_forward(vp.data, mp.data, mp.data, p.l2_wq, p.l2_wk, p.l2_wv,
                                    vp.positions, mp.positions, dims, cache ? &cache->a2 : nullptr);
    const MatrixXd f = ffn_forward(a, p.l2_ffn, cache ? &cache->f2 : nullptr);
    return {vp.data + f, vp.positions};
}

TokenMatrix motion_tokens_from_segments(const std::vector<std::vector<ImuSample>>& segments,
                                        const std::vector<std::int64_t>& frame_pos,
                                        const FusionParams& p, const FusionDims& dims,
                                        ForwardCache* cache) {
    const long n = static_cast<long>(segments.size()) + 1;
    TokenMatrix m;
    m.data.resize(n, dims.d_model);
    m.positions.assign(frame_pos.begin(), frame_pos.end());
    m.data.row(0) = p.start_token.transpose();
    if (cache) cache->segments.resize(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const MatrixXd cols = segment_to_columns(segments[i], dims);
        const VectorXd token =
            gru_forward(cols, p, dims, cache ? &cache->segments[i] : nullptr);
        m.data.row(static_cast<long>(i) + 1) = token.transpose();
    }
    return m;
}

TokenMatrix forward_full(const TokenMatrix& v, const std::vector<std::vector<ImuSample>>& segments,
                         const FusionParams& p, const FusionDims& dims, ForwardCache* cache) {
    dims.validate();
    check_width(v, dims, "fusion_forward");
    const std::vector<std::int64_t> frame_pos = frame_positions(v, dims);
    if (frame_pos.size() != segments.size() + 1) {
        throw ValidationError("fusion_forward: need one segment per keyframe after the first");
    }
    TokenMatrix m = motion_tokens_from_segments(segments, frame_pos, p, dims, cache);
    if (cache) cache->m = m;
    Layer1Out l1 = layer1_forward(v, m, p, dims, cache);
    if (cache) {
        cache->v_prime = l1.v_prime;
        cache->m_prime = l1.m_prime;
    }
    TokenMatrix v_bar = layer2_forward(l1.v_prime, l1.m_prime, p, dims, cache);
    if (cache) cache->v_bar = v_bar;
    return v_bar;
}

}  // namespace

void FusionDims::validate() const {
    if (d_model <= 0 || n_heads <= 0 || d_ff <= 0 || gru_hidden <= 0 || gru_layers <= 0 ||
        tokens_per_frame <= 0 || max_segment_samples <= 0) {
        throw ValidationError("FusionDims: all dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ValidationError("FusionDims: d_model must be divisible by n_heads");
    }
    if ((d_model / n_heads) % 2 != 0) {
        throw ValidationError("FusionDims: head width must be even for RoPE pairs");
    }
}

FusionParams FusionParams::zeros(const FusionDims& dims) {
    dims.validate();
    FusionParams p;
    const int h = dims.gru_hidden;
    const int d = dims.d_model;
    p.gru.resize(dims.gru_layers);
    for (int l = 0; l < dims.gru_layers; ++l) {
        const int in = l == 0 ? 6 : 2 * h;
        for (int dir = 0; dir < 2; ++dir) {
            p.gru[l][dir].w = MatrixXd::Zero(3 * h, in);
            p.gru[l][dir].u = MatrixXd::Zero(3 * h, h);
            p.gru[l][dir].b = VectorXd::Zero(3 * h);
        }
    }
    p.out_proj = MatrixXd::Zero(2 * h, d);
    p.out_bias = VectorXd::Zero(d);
    p.start_token = VectorXd::Zero(d);
    auto zmat = [&](int r, int c) { return MatrixXd::Zero(r, c); };
    p.l1_wq_v = zmat(d, d);
    p.l1_wk_m = zmat(d, d);
    p.l1_wv_m = zmat(d, d);
    p.l1_wq_m = zmat(d, d);
    p.l1_wk_v = zmat(d, d);
    p.l1_wv_v = zmat(d, d);
    p.l2_wq = zmat(d, d);
    p.l2_wk = zmat(d, d);
    p.l2_wv = zmat(d, d);
    for (FfnParams* f : {&p.l1_ffn_v, &p.l1_ffn_m, &p.l2_ffn}) {
        f->w1 = MatrixXd::Zero(d, dims.d_ff);
        f->b1 = VectorXd::Zero(dims.d_ff);
        f->w2 = MatrixXd::Zero(dims.d_ff, d);
        f->b2 = VectorXd::Zero(d);
    }
    return p;
}

std::vector<TensorRef> tensor_refs(FusionParams& p) {
    std::vector<TensorRef> refs;
    auto add_mat = [&](const std::string& name, MatrixXd& m) {
        refs.push_back({name, m.data(), m.rows(), m.cols()});
    };
    auto add_vec = [&](const std::string& name, VectorXd& v) {
        refs.push_back({name, v.data(), v.rows(), 1});
    };
    for (std::size_t l = 0; l < p.gru.size(); ++l) {
        for (int dir = 0; dir < 2; ++dir) {
            const std::string base =
                "gru.l" + std::to_string(l) + (dir == 0 ? ".fwd." : ".bwd.");
            add_mat(base + "w", p.gru[l][dir].w);
            add_mat(base + "u", p.gru[l][dir].u);
            add_vec(base + "b", p.gru[l][dir].b);
        }
    }
    add_mat("out_proj", p.out_proj);
    add_vec("out_bias", p.out_bias);
    add_vec("start_token", p.start_token);
    add_mat("l1.wq_v", p.l1_wq_v);
    add_mat("l1.wk_m", p.l1_wk_m);
    add_mat("l1.wv_m", p.l1_wv_m);
    add_mat("l1.wq_m", p.l1_wq_m);
    add_mat("l1.wk_v", p.l1_wk_v);
    add_mat("l1.wv_v", p.l1_wv_v);
    auto add_ffn = [&](const std::string& base, FfnParams& f) {
        add_mat(base + ".w1", f.w1);
        add_vec(base + ".b1", f.b1);
        add_mat(base + ".w2", f.w2);
        add_vec(base + ".b2", f.b2);
    };
    add_ffn("l1.ffn_v", p.l1_ffn_v);
    add_ffn("l1.ffn_m", p.l1_ffn_m);
    add_mat("l2.wq", p.l2_wq);
    add_mat("l2.wk", p.l2_wk);
    add_mat("l2.wv", p.l2_wv);
    add_ffn("l2.ffn", p.l2_ffn);
    return refs;
}

FusionParams FusionParams::init(const FusionDims& dims, std::uint64_t seed) {
    FusionParams p = zeros(dims);
    const CounterRng rng(seed);

    auto xavier = [&](const std::string& name, MatrixXd& m, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        const auto stream = CounterRng::stream("init") ^ CounterRng::stream(name);
        for (long i = 0; i < m.size(); ++i) {
            m.data()[i] = limit * (2.0 * rng.uniform(stream, static_cast<std::uint64_t>(i)) - 1.0);
        }
    };
    auto orthogonal_blocks = [&](const std::string& name, MatrixXd& u, int h) {
        const auto stream = CounterRng::stream("init-orth") ^ CounterRng::stream(name);
        for (int g = 0; g < 3; ++g) {
            MatrixXd raw(h, h);
            for (long i = 0; i < raw.size(); ++i) {
                raw.data()[i] = rng.normal(stream, static_cast<std::uint64_t>(g) * h * h + i);
            }
            const Eigen::HouseholderQR<MatrixXd> qr(raw);
            MatrixXd q = qr.householderQ() * MatrixXd::Identity(h, h);
            const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
            for (int j = 0; j < h; ++j) {
                if (r(j, j) < 0.0) q.col(j) *= -1.0;
            }
            u.middleRows(g * h, h) = q;
        }
    };

    const int h = dims.gru_hidden;
    for (std::size_t l = 0; l < p.gru.size(); ++l) {
        for (int dir = 0; dir < 2; ++dir) {
            const std::string base =
                "gru.l" + std::to_string(l) + (dir == 0 ? ".fwd." : ".bwd.");
            xavier(base + "w", p.gru[l][dir].w, p.gru[l][dir].w.cols(), h);
            orthogonal_blocks(base + "u", p.gru[l][dir].u, h);
        }
    }
    xavier("out_proj", p.out_proj, 2 * h, dims.d_model);
    {
        const auto stream = CounterRng::stream("init") ^ CounterRng::stream("start_token");
        for (long i = 0; i < p.start_token.size(); ++i) {
            p.start_token[i] = 0.02 * rng.normal(stream, static_cast<std::uint64_t>(i));
        }
    }
    const double d = dims.d_model;
    xavier("l1.wq_v", p.l1_wq_v, d, d);
    xavier("l1.wk_m", p.l1_wk_m, d, d);
    xavier("l1.wv_m", p.l1_wv_m, d, d);
    xavier("l1.wq_m", p.l1_wq_m, d, d);
    xavier("l1.wk_v", p.l1_wk_v, d, d);
    xavier("l1.wv_v", p.l1_wv_v, d, d);
    xavier("l2.wq", p.l2_wq, d, d);
    xavier("l2.wk", p.l2_wk, d, d);
    xavier("l2.wv", p.l2_wv, d, d);
    const std::pair<const char*, FfnParams*> ffns[] = {
        {"l1.ffn_v", &p.l1_ffn_v}, {"l1.ffn_m", &p.l1_ffn_m}, {"l2.ffn", &p.l2_ffn}};
    for (const auto& [name, f] : ffns) {
        xavier(std::string(name) + ".w1", f->w1, d, dims.d_ff);
        xavier(std::string(name) + ".w2", f->w2, dims.d_ff, d);
    }
    return p;
}

Eigen::VectorXd encode_segment(std::span<const ImuSample> segment, const FusionParams& params,
                               const FusionDims& dims) {
    dims.validate();
    return gru_forward(segment_to_columns(segment, dims), params, dims, nullptr);
}

Eigen::VectorXd rope_rotate(const Eigen::VectorXd& head_vec, std::int64_t position) {
    if (head_vec.size() % 2 != 0) {
        throw ValidationError("rope_rotate: head width must be even");
    }
    MatrixXd m = head_vec.transpose();
    const std::vector<std::int64_t> pos{position};
    rope_rows(m, pos, static_cast<int>(head_vec.size()), 1.0);
    return m.transpose();
}

TokenMatrix build_motion_tokens(const std::vector<KeyframeRecord>& records,
                                const ImuSequence& imu, const FusionParams& params,
                                const FusionDims& dims) {
    dims.validate();
    if (records.empty()) throw ValidationError("build_motion_tokens: no keyframes");
    TokenMatrix m;
    m.data.resize(static_cast<long>(records.size()), dims.d_model);
    m.positions.resize(records.size());
    m.data.row(0) = params.start_token.transpose();
    m.positions[0] = 1;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const KeyframeRecord& rec = records[i];
        if (rec.imu_begin > rec.imu_end || rec.imu_end > imu.samples.size()) {
            throw ValidationError("build_motion_tokens: record IMU range out of bounds");
        }
        if (rec.imu_end == rec.imu_begin) {
            throw ValidationError("build_motion_tokens: empty IMU segment for keyframe " +
                                  std::to_string(rec.frame_index));
        }
        const std::span<const ImuSample> seg(imu.samples.data() + rec.imu_begin,
                                             rec.imu_end - rec.imu_begin);
        m.data.row(static_cast<long>(i)) = encode_segment(seg, params, dims).transpose();
        m.positions[i] = static_cast<std::int64_t>(i) + 1;
    }
    return m;
}

Layer1Out fuse_layer1(const TokenMatrix& v, const TokenMatrix& m, const FusionParams& params,
                      const FusionDims& dims) {
    dims.validate();
    return layer1_forward(v, m, params, dims, nullptr);
}

TokenMatrix fuse_layer2(const TokenMatrix& v_prime, const TokenMatrix& m_prime,
                        const FusionParams& params, const FusionDims& dims) {
    dims.validate();
    return layer2_forward(v_prime, m_prime, params, dims, nullptr);
}

TokenMatrix fusion_forward(const TokenMatrix& v,
                           const std::vector<std::vector<ImuSample>>& segments,
                           const FusionParams& params, const FusionDims& dims) {
    return forward_full(v, segments, params, dims, nullptr);
}

FusionGradResult fusion_grad(const TokenMatrix& v,
                             const std::vector<std::vector<ImuSample>>& segments,
                             const FusionParams& params, const FusionDims& dims) {
    ForwardCache cache;
    FusionGradResult result;
    result.v_bar = forward_full(v, segments, params, dims, &cache);
    result.loss = result.v_bar.data.squaredNorm();
    result.grads = FusionParams::zeros(dims);
    FusionParams& g = result.grads;

    const MatrixXd d_vbar = 2.0 * cache.v_bar.data;

    // Layer 2: V_bar = V' + FFN(Attn(V' Wq, M' Wk, M' Wv)).
    MatrixXd d_attn2 = ffn_backward(cache.f2, d_vbar, params.l2_ffn, g.l2_ffn);
    AttnGrads a2 = attn_backward(cache.a2, d_attn2, params.l2_wq, params.l2_wk, params.l2_wv,
                                 cache.v_prime.positions, cache.m_prime.positions, dims);
    g.l2_wq += a2.d_wq;
    g.l2_wk += a2.d_wk;
    g.l2_wv += a2.d_wv;
    MatrixXd d_vprime = d_vbar + a2.d_q_in;
    MatrixXd d_mprime = a2.d_k_in + a2.d_v_in;

    // Layer 1, vision side: V' = V + FFN(Attn(V Wq_v, M Wk_m, M Wv_m)).
    MatrixXd d_attn1v = ffn_backward(cache.f1v, d_vprime, params.l1_ffn_v, g.l1_ffn_v);
    AttnGrads a1v = attn_backward(cache.a1v, d_attn1v, params.l1_wq_v, params.l1_wk_m,
                                  params.l1_wv_m, cache.v_bar.positions, cache.m.positions, dims);
    g.l1_wq_v += a1v.d_wq;
    g.l1_wk_m += a1v.d_wk;
    g.l1_wv_m += a1v.d_wv;

    // Layer 1, motion side: M' = M + FFN(Attn(M Wq_m, V Wk_v, V Wv_v)).
    MatrixXd d_attn1m = ffn_backward(cache.f1m, d_mprime, params.l1_ffn_m, g.l1_ffn_m);
    AttnGrads a1m = attn_backward(cache.a1m, d_attn1m, params.l1_wq_m, params.l1_wk_v,
                                  params.l1_wv_v, cache.m.positions, cache.v_bar.positions, dims);
    g.l1_wq_m += a1m.d_wq;
    g.l1_wk_v += a1m.d_wk;
    g.l1_wv_v += a1m.d_wv;

    MatrixXd d_m = d_mprime + a1m.d_q_in + a1v.d_k_in + a1v.d_v_in;

    // Motion tokens: row 0 is the start token, the rest come from the GRU.
    g.start_token += d_m.row(0).transpose();
    for (std::size_t i = 0; i < cache.segments.size(); ++i) {
        gru_backward(cache.segments[i], d_m.row(static_cast<long>(i) + 1).transpose(), params,
                     dims, g);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization

void save_fusion_params(const FusionParams& params, const FusionDims& dims,
                        const std::string& bin_path, const std::string& manifest_path) {
    FusionParams& p = const_cast<FusionParams&>(params);
    const std::vector<TensorRef> refs = tensor_refs(p);

    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot open " + bin_path + " for writing");
    nlohmann::json manifest;
    manifest["format"] = "egokit-tensors-v1";
    manifest["dtype"] = "float64";
    manifest["layout"] = "row-major";
    manifest["dims"] = {{"d_model", dims.d_model},
                        {"n_heads", dims.n_heads},
                        {"d_ff", dims.d_ff},
                        {"gru_hidden", dims.gru_hidden},
                        {"gru_layers", dims.gru_layers},
                        {"tokens_per_frame", dims.tokens_per_frame},
                        {"max_segment_samples", dims.max_segment_samples}};
    std::uint64_t offset = 0;
    nlohmann::json tensors = nlohmann::json::array();
    for (const TensorRef& r : refs) {
        for (long i = 0; i < r.rows; ++i) {
            for (long j = 0; j < r.cols; ++j) {
                const double value = r.data[j * r.rows + i];  // column-major storage
                bin.write(reinterpret_cast<const char*>(&value), sizeof(double));
            }
        }
        tensors.push_back({{"name", r.name},
                           {"rows", r.rows},
                           {"cols", r.cols},
                           {"offset_bytes", offset}});
        offset += static_cast<std::uint64_t>(r.size()) * sizeof(double);
    }
    manifest["tensors"] = tensors;
    if (!bin) throw IoError("failed writing " + bin_path);
    bin.close();

    std::ofstream mf(manifest_path);
    if (!mf) throw IoError("cannot open " + manifest_path + " for writing");
    mf << manifest.dump(2) << "\n";
}

LoadedFusionParams load_fusion_params(const std::string& bin_path,
                                      const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("cannot open " + manifest_path);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad manifest " + manifest_path + ": " + e.what());
    }

    LoadedFusionParams out;
    const auto& jd = manifest.at("dims");
    out.dims.d_model = jd.at("d_model").get<int>();
    out.dims.n_heads = jd.at("n_heads").get<int>();
    out.dims.d_ff = jd.at("d_ff").get<int>();
    out.dims.gru_hidden = jd.at("gru_hidden").get<int>();
    out.dims.gru_layers = jd.at("gru_layers").get<int>();
    out.dims.tokens_per_frame = jd.at("tokens_per_frame").get<int>();
    out.dims.max_segment_samples = jd.at("max_segment_samples").get<int>();
    out.params = FusionParams::zeros(out.dims);

    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot open " + bin_path);

    const std::vector<TensorRef> refs = tensor_refs(out.params);
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != refs.size()) {
        throw ValidationError("manifest tensor count does not match the expected layout");
    }
    for (std::size_t k = 0; k < refs.size(); ++k) {
        const auto& jt = tensors[k];
        const TensorRef& r = refs[k];
        if (jt.at("name").get<std::string>() != r.name || jt.at("rows").get<long>() != r.rows ||
            jt.at("cols").get<long>() != r.cols) {
            throw ValidationError("manifest tensor '" + jt.at("name").get<std::string>() +
                                  "' does not match the expected shape");
        }
        bin.seekg(static_cast<std::streamoff>(jt.at("offset_bytes").get<std::uint64_t>()));
        for (long i = 0; i < r.rows; ++i) {
            for (long j = 0; j < r.cols; ++j) {
                double value;
                bin.read(reinterpret_cast<char*>(&value), sizeof(double));
                if (!bin) throw IoError("truncated tensor data in " + bin_path);
                r.data[j * r.rows + i] = value;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checks

FusionCheckReport run_fusion_checks(const FusionCheckOptions& options) {
    FusionCheckReport report;
    auto add = [&](const std::string& name, bool pass, double value) {
        report.lines.push_back({name, pass, value});
        report.all_pass = report.all_pass && pass;
    };

    const FusionDims& dims = options.dims;
    dims.validate();
    const CounterRng rng(options.seed);
    static constexpr auto kProblem = CounterRng::stream("check-problem");

    const int n = options.n_keyframes;
    TokenMatrix v;
    v.data.resize(static_cast<long>(n) * dims.tokens_per_frame, dims.d_model);
    for (long i = 0; i < v.data.size(); ++i) {
        v.data.data()[i] = rng.normal(kProblem, static_cast<std::uint64_t>(i));
    }
    v.positions.resize(static_cast<std::size_t>(v.data.rows()));
    for (long i = 0; i < v.data.rows(); ++i) {
        v.positions[static_cast<std::size_t>(i)] = i / dims.tokens_per_frame + 1;
    }

    std::vector<std::vector<ImuSample>> segments(static_cast<std::size_t>(n) - 1);
    std::uint64_t ctr = 1000000;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const int len =
            1 + static_cast<int>(rng.uniform(kProblem, ctr++) * options.max_segment_len);
        segments[s].resize(static_cast<std::size_t>(len));
        for (int k = 0; k < len; ++k) {
            ImuSample& smp = segments[s][static_cast<std::size_t>(k)];
            smp.t = 0.005 * k;
            for (int j = 0; j < 3; ++j) {
                smp.gyro[j] = 0.8 * rng.normal(kProblem, ctr++);
                smp.accel[j] = 2.0 * rng.normal(kProblem, ctr++);
            }
        }
    }

    const FusionParams params = FusionParams::init(dims, options.seed);

    // Residual identity with all-zero parameters.
    {
        const FusionParams zero = FusionParams::zeros(dims);
        const TokenMatrix v_bar = fusion_forward(v, segments, zero, dims);
        const double diff = (v_bar.data - v.data).cwiseAbs().maxCoeff();
        add("residual-identity-zero-params", diff == 0.0, diff);
    }

    // Softmax rows over every head of every attention block.
    {
        ForwardCache cache;
        forward_full(v, segments, params, dims, &cache);
        double worst = 0.0;
        for (const AttnCache* a : {&cache.a1v, &cache.a1m, &cache.a2}) {
            for (const MatrixXd& w : a->weights) {
                worst = std::max(worst, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
                worst = std::max(worst, std::max(0.0, -w.minCoeff()));
            }
        }
        add("softmax-rows-sum-to-one", worst <= 1e-6, worst);
    }

    // RoPE preserves norms.
    {
        double worst = 0.0;
        const int dh = dims.head_width();
        for (int trial = 0; trial < 64; ++trial) {
            VectorXd x(dh);
            for (int i = 0; i < dh; ++i) {
                x[i] = rng.normal(kProblem, 5000000 + trial * 100 + i);
            }
            const auto pos = static_cast<std::int64_t>(trial * 37 - 512);
            worst = std::max(worst, std::abs(rope_rotate(x, pos).norm() - x.norm()));
        }
        add("rope-preserves-norm", worst <= 1e-12, worst);
    }

    // RoPE inner products depend only on relative position.
    {
        double worst = 0.0;
        const int dh = dims.head_width();
        for (int trial = 0; trial < 64; ++trial) {
            VectorXd q(dh), k(dh);
            for (int i = 0; i < dh; ++i) {
                q[i] = rng.normal(kProblem, 6000000 + trial * 100 + i);
                k[i] = rng.normal(kProblem, 7000000 + trial * 100 + i);
            }
            const std::int64_t p1 = trial;
            const std::int64_t p2 = 3 * trial + 11;
            const std::int64_t shift = 1 + trial * 13;
            const double base = rope_rotate(q, p1).dot(rope_rotate(k, p2));
            const double shifted = rope_rotate(q, p1 + shift).dot(rope_rotate(k, p2 + shift));
            worst = std::max(worst, std::abs(base - shifted));
        }
        add("rope-relative-position", worst <= 1e-10, worst);
    }

    // Shifting every position index leaves the pipeline output unchanged.
    {
        const TokenMatrix base = fusion_forward(v, segments, params, dims);
        TokenMatrix shifted_v = v;
        for (auto& p : shifted_v.positions) p += 7;
        const TokenMatrix shifted = fusion_forward(shifted_v, segments, params, dims);
        const double diff = (base.data - shifted.data).cwiseAbs().maxCoeff();
        add("position-shift-invariance", diff <= 1e-8, diff);
    }

    // Output shape and determinism.
    {
        const TokenMatrix one = fusion_forward(v, segments, params, dims);
        const TokenMatrix two = fusion_forward(v, segments, params, dims);
        const bool shape_ok =
            one.data.rows() == v.data.rows() && one.data.cols() == dims.d_model;
        add("output-shape-contract", shape_ok, static_cast<double>(one.data.rows()));
        const double diff = (one.data - two.data).cwiseAbs().maxCoeff();
        add("forward-determinism", diff == 0.0, diff);
    }

    // Single-keyframe case: softmax over one motion token degenerates to
    // weight one, so V_bar = V' + FFN(M' Wv).
    {
        TokenMatrix v1;
        v1.data = v.data.topRows(dims.tokens_per_frame);
        v1.positions.assign(v.positions.begin(), v.positions.begin() + dims.tokens_per_frame);
        const TokenMatrix v_bar = fusion_forward(v1, {}, params, dims);
        TokenMatrix m1;
        m1.data = params.start_token.transpose();
        m1.positions = {1};
        const Layer1Out l1 = fuse_layer1(v1, m1, params, dims);
        const MatrixXd attn_rows =
            (l1.m_prime.data * params.l2_wv).replicate(v1.data.rows(), 1);
        const MatrixXd expect = l1.v_prime.data + ffn_forward(attn_rows, params.l2_ffn, nullptr);
        const double diff = (v_bar.data - expect).cwiseAbs().maxCoeff();
        add("single-keyframe-softmax", diff <= 1e-12, diff);
    }

    // Reverse-mode gradients against central finite differences.
    {
        FusionParams work = params;
        const FusionGradResult res = fusion_grad(v, segments, work, dims);
        FusionParams grads = res.grads;
        const std::vector<TensorRef> prefs = tensor_refs(work);
        const std::vector<TensorRef> grefs = tensor_refs(grads);
        double worst = 0.0;
        for (std::size_t t = 0; t < prefs.size(); ++t) {
            for (long i = 0; i < prefs[t].size(); ++i) {
                const double saved = prefs[t].data[i];
                prefs[t].data[i] = saved + options.fd_epsilon;
                const double up =
                    fusion_forward(v, segments, work, dims).data.squaredNorm();
                prefs[t].data[i] = saved - options.fd_epsilon;
                const double dn =
                    fusion_forward(v, segments, work, dims).data.squaredNorm();
                prefs[t].data[i] = saved;
                const double fd = (up - dn) / (2.0 * options.fd_epsilon);
                const double ad = grefs[t].data[i];
                const double rel =
                    std::abs(fd - ad) / std::max({1.0, std::abs(fd), std::abs(ad)});
                worst = std::max(worst, rel);
            }
        }
        add("gradient-vs-finite-difference", worst <= options.fd_tolerance, worst);

        const FusionGradResult res2 = fusion_grad(v, segments, work, dims);
        double det = std::abs(res.loss - res2.loss);
        FusionParams g2 = res2.grads;
        const std::vector<TensorRef> g2refs = tensor_refs(g2);
        for (std::size_t t = 0; t < grefs.size(); ++t) {
            for (long i = 0; i < grefs[t].size(); ++i) {
                det = std::max(det, std::abs(grefs[t].data[i] - g2refs[t].data[i]));
            }
        }
        add("gradient-determinism", det == 0.0, det);
    }

    // Same finite-difference sweep with every segment of length one, which
    // exercises the degenerate single-step GRU in both directions.
    {
        std::vector<std::vector<ImuSample>> short_segments = segments;
        for (auto& s : short_segments) s.resize(1);
        FusionParams work = params;
        const FusionGradResult res = fusion_grad(v, short_segments, work, dims);
        FusionParams grads = res.grads;
        const std::vector<TensorRef> prefs = tensor_refs(work);
        const std::vector<TensorRef> grefs = tensor_refs(grads);
        double worst = 0.0;
        for (std::size_t t = 0; t < prefs.size(); ++t) {
            for (long i = 0; i < prefs[t].size(); ++i) {
                const double saved = prefs[t].data[i];
                prefs[t].data[i] = saved + options.fd_epsilon;
                const double up =
                    fusion_forward(v, short_segments, work, dims).data.squaredNorm();
                prefs[t].data[i] = saved - options.fd_epsilon;
                const double dn =
                    fusion_forward(v, short_segments, work, dims).data.squaredNorm();
                prefs[t].data[i] = saved;
                const double fd = (up - dn) / (2.0 * options.fd_epsilon);
                const double ad = grefs[t].data[i];
                const double rel =
                    std::abs(fd - ad) / std::max({1.0, std::abs(fd), std::abs(ad)});
                worst = std::max(worst, rel);
            }
        }
        add("gradient-length-one-segments", worst <= options.fd_tolerance, worst);
    }

    return report;
}

}  // namespace ego
