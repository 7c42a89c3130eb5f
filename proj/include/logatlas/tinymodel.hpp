#pragma once

// Desk-scale decoder transformer with exact hand-derived gradients.
// Mechanisms under test: low-rank adapters on the attention Q/K/V/O
// projections over a frozen base, and a soft mixture-of-experts feed-forward
// block (token-wise gate-weighted average over all experts) with a
// load-balancing auxiliary loss lambda * N_e * sum_i mean_t(g_i(t))^2.
// Trainable parameters are exactly: adapter pairs, gate weights, expert
// weights. Everything else (embeddings, base projections, layer norms,
// unembedding) stays frozen.
//
// All math is 64-bit; gradients are verified against central finite
// differences by the test suite, which is the substitute this artifact makes
// for full-scale training claims.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "logatlas/matrix.hpp"
#include "logatlas/rng.hpp"

namespace logatlas {

struct TinyConfig {
    int vocab_size = 256;
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 2;
    int max_seq = 128;
    int n_experts = 4;
    int expert_hidden = 128;
    int lora_rank = 16;
    double lora_alpha = 32.0;
    double lora_dropout = 0.10;
    double lambda_aux = 0.01;

    double lora_scale() const { return lora_alpha / static_cast<double>(lora_rank); }

    void validate() const {
        if (vocab_size <= 0 || d_model <= 0 || n_heads <= 0 || n_layers <= 0 ||
            max_seq <= 0 || n_experts <= 0 || expert_hidden <= 0)
            throw std::invalid_argument("TinyConfig: dimensions must be positive");
        if (d_model % n_heads != 0)
            throw std::invalid_argument("TinyConfig: d_model % n_heads != 0");
        if (lora_rank <= 0 || lora_rank > d_model)
            throw std::invalid_argument(
                "TinyConfig: lora_rank must be in [1, d_model]");
        if (lora_dropout < 0.0 || lora_dropout >= 1.0)
            throw std::invalid_argument("TinyConfig: dropout outside [0,1)");
        if (lambda_aux < 0.0)
            throw std::invalid_argument("TinyConfig: lambda_aux negative");
    }
};

inline void to_json(json& j, const TinyConfig& c) {
    j = json{{"vocab_size", c.vocab_size},   {"d_model", c.d_model},
             {"n_heads", c.n_heads},         {"n_layers", c.n_layers},
             {"max_seq", c.max_seq},         {"n_experts", c.n_experts},
             {"expert_hidden", c.expert_hidden},
             {"lora_rank", c.lora_rank},     {"lora_alpha", c.lora_alpha},
             {"lora_dropout", c.lora_dropout},
             {"lambda_aux", c.lambda_aux}};
}

inline void from_json(const json& j, TinyConfig& c) {
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.n_experts = j.at("n_experts").get<int>();
    c.expert_hidden = j.at("expert_hidden").get<int>();
    c.lora_rank = j.at("lora_rank").get<int>();
    c.lora_alpha = j.at("lora_alpha").get<double>();
    c.lora_dropout = j.at("lora_dropout").get<double>();
    c.lambda_aux = j.at("lambda_aux").get<double>();
}

struct Tensor {
    std::string name;
    Mat value;
    Mat grad;
    bool trainable = false;

    void init(std::string n, int r, int c, bool train) {
        name = std::move(n);
        value = Mat(r, c);
        grad = Mat(r, c);
        trainable = train;
    }
};

// y = x W + (alpha/r) (drop(x) A) B. W frozen, A small random, B zero at
// init so the adapted layer starts exactly at the base map.
struct LoRALinear {
    Tensor w;  // frozen [d_in x d_out]
    Tensor a;  // trainable [d_in x r]
    Tensor b;  // trainable [r x d_out]
};

struct ExpertFFN {
    Tensor u;   // [d_model x hidden]
    Tensor b1;  // [1 x hidden]
    Tensor v;   // [hidden x d_model]
    Tensor b2;  // [1 x d_model]
};

struct SoftMoEBlock {
    Tensor gate;  // [d_model x n_experts]
    std::vector<ExpertFFN> experts;
};

struct LayerNormParams {
    Tensor gamma;  // [1 x d_model], frozen
    Tensor beta;   // [1 x d_model], frozen
};

struct TransformerLayer {
    LayerNormParams ln1, ln2;
    LoRALinear wq, wk, wv, wo;
    SoftMoEBlock moe;
};

namespace nn {

constexpr double kLnEps = 1e-5;

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

inline double gelu_grad(double x) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
    return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) +
           x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

inline void softmax_rows(Mat& m) {
    for (int i = 0; i < m.rows; ++i) {
        double mx = m.at(i, 0);
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            const double e = std::exp(m.at(i, j) - mx);
            m.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < m.cols; ++j) m.at(i, j) /= sum;
    }
}

// Given dL/dp for a row-softmax output p, returns dL/dlogits in place of dp.
inline void softmax_backward_rows(const Mat& probs, Mat& dprobs) {
    for (int i = 0; i < probs.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < probs.cols; ++j)
            dot += dprobs.at(i, j) * probs.at(i, j);
        for (int j = 0; j < probs.cols; ++j)
            dprobs.at(i, j) = probs.at(i, j) * (dprobs.at(i, j) - dot);
    }
}

struct LnCache {
    Mat xhat;                 // normalized input
    std::vector<double> rstd;  // per row
};

inline Mat layer_norm(const Mat& x, const LayerNormParams& p, LnCache* cache) {
    Mat y(x.rows, x.cols);
    if (cache) {
        cache->xhat = Mat(x.rows, x.cols);
        cache->rstd.assign(static_cast<std::size_t>(x.rows), 0.0);
    }
    for (int i = 0; i < x.rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < x.cols; ++j) mu += x.at(i, j);
        mu /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= x.cols;
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        for (int j = 0; j < x.cols; ++j) {
            const double xh = (x.at(i, j) - mu) * rstd;
            if (cache) cache->xhat.at(i, j) = xh;
            y.at(i, j) = p.gamma.value.at(0, j) * xh + p.beta.value.at(0, j);
        }
        if (cache) cache->rstd[static_cast<std::size_t>(i)] = rstd;
    }
    return y;
}

// Input gradient only; gamma/beta are frozen here.
inline Mat layer_norm_backward(const Mat& dy, const LayerNormParams& p,
                               const LnCache& cache) {
    Mat dx(dy.rows, dy.cols);
    const int n = dy.cols;
    for (int i = 0; i < dy.rows; ++i) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int j = 0; j < n; ++j) {
            const double dxh = dy.at(i, j) * p.gamma.value.at(0, j);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * cache.xhat.at(i, j);
        }
        const double inv_n = 1.0 / n;
        for (int j = 0; j < n; ++j) {
            const double dxh = dy.at(i, j) * p.gamma.value.at(0, j);
            dx.at(i, j) = cache.rstd[static_cast<std::size_t>(i)] *
                          (dxh - inv_n * sum_dxhat -
                           cache.xhat.at(i, j) * inv_n * sum_dxhat_xhat);
        }
    }
    return dx;
}

struct LoraCache {
    Mat x;     // layer input
    Mat xd;    // adapter-path input after dropout (== x in eval mode)
    Mat xa;    // xd * A
    Mat mask;  // inverted-dropout keep mask, only in training mode
    bool dropped = false;
};

inline Mat lora_forward(const Mat& x, const LoRALinear& l, double scale,
                        double dropout, bool training, Rng* rng,
                        LoraCache* cache) {
    using namespace matops;
    if (x.cols != l.w.value.rows)
        throw std::invalid_argument("lora_forward: shape mismatch");
    Mat y = matmul(x, l.w.value);
    Mat xd = x;
    Mat mask;
    bool dropped = false;
    if (training && dropout > 0.0) {
        if (!rng)
            throw std::invalid_argument("lora_forward: training needs an rng");
        mask = Mat(x.rows, x.cols);
        const double keep = 1.0 - dropout;
        for (std::size_t i = 0; i < mask.d.size(); ++i)
            mask.d[i] = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
        for (std::size_t i = 0; i < xd.d.size(); ++i) xd.d[i] *= mask.d[i];
        dropped = true;
    }
    Mat xa = matmul(xd, l.a.value);
    axpy_inplace(y, scale, matmul(xa, l.b.value));
    if (cache) {
        cache->x = x;
        cache->xd = std::move(xd);
        cache->xa = std::move(xa);
        cache->mask = std::move(mask);
        cache->dropped = dropped;
    }
    return y;
}

// Accumulates dA, dB; returns dx. W is frozen but still routes gradient.
inline Mat lora_backward(const Mat& dy, LoRALinear& l, double scale,
                         const LoraCache& cache) {
    using namespace matops;
    Mat dx = matmul_nt(dy, l.w.value);                    // dY W^T
    Mat dxa = matmul_nt(dy, l.b.value);                   // dY B^T
    scale_inplace(dxa, scale);
    axpy_inplace(l.b.grad, scale, matmul_tn(cache.xa, dy));  // s (XA)^T dY
    add_inplace(l.a.grad, matmul_tn(cache.xd, dxa));
    Mat dxd = matmul_nt(dxa, l.a.value);
    if (cache.dropped)
        for (std::size_t i = 0; i < dxd.d.size(); ++i) dxd.d[i] *= cache.mask.d[i];
    add_inplace(dx, dxd);
    return dx;
}

}  // namespace nn

struct SoftMoECache {
    Mat x;                       // block input (post-LN)
    Mat gate_probs;              // [T x E]
    std::vector<Mat> expert_s;   // pre-GELU [T x H]
    std::vector<Mat> expert_a;   // post-GELU [T x H]
    std::vector<Mat> expert_out; // [T x D]
};

struct LayerCache {
    Mat h_in;
    nn::LnCache ln1;
    Mat x1;  // ln1 output
    nn::LoraCache q, k, v, o;
    Mat qm, km, vm;
    std::vector<Mat> attn_probs;  // per head [T x T]
    Mat ctx;
    Mat h_mid;
    nn::LnCache ln2;
    SoftMoECache moe;
};

struct ForwardCache {
    std::vector<int> tokens;
    std::vector<LayerCache> layers;
    nn::LnCache lnf;
    Mat h_final;
    bool training = false;
};

// Soft-MoE forward shared by the full model and the standalone op: returns
// the mixture output and the auxiliary loss for this block.
inline Mat soft_moe_forward(const Mat& x, const SoftMoEBlock& block,
                            double lambda_aux, double* aux_loss,
                            SoftMoECache* cache) {
    using namespace matops;
    const int n_experts = static_cast<int>(block.experts.size());
    if (x.cols != block.gate.value.rows)
        throw std::invalid_argument("soft_moe_forward: shape mismatch");

    Mat gate = matmul(x, block.gate.value);  // logits -> probs in place
    nn::softmax_rows(gate);

    Mat y(x.rows, x.cols);
    std::vector<Mat> s_list, a_list, out_list;
    for (int e = 0; e < n_experts; ++e) {
        const ExpertFFN& ex = block.experts[static_cast<std::size_t>(e)];
        Mat s = matmul(x, ex.u.value);
        add_row_inplace(s, ex.b1.value);
        Mat a(s.rows, s.cols);
        for (std::size_t i = 0; i < s.d.size(); ++i) a.d[i] = nn::gelu(s.d[i]);
        Mat out = matmul(a, ex.v.value);
        add_row_inplace(out, ex.b2.value);
        for (int t = 0; t < x.rows; ++t) {
            const double g = gate.at(t, e);
            for (int j = 0; j < x.cols; ++j) y.at(t, j) += g * out.at(t, j);
        }
        if (cache) {
            s_list.push_back(std::move(s));
            a_list.push_back(std::move(a));
            out_list.push_back(std::move(out));
        }
    }

    if (aux_loss) {
        double sum_sq = 0.0;
        for (int e = 0; e < n_experts; ++e) {
            double m = 0.0;
            for (int t = 0; t < x.rows; ++t) m += gate.at(t, e);
            m /= x.rows;
            sum_sq += m * m;
        }
        *aux_loss = lambda_aux * n_experts * sum_sq;
    }
    if (cache) {
        cache->x = x;
        cache->gate_probs = gate;
        cache->expert_s = std::move(s_list);
        cache->expert_a = std::move(a_list);
        cache->expert_out = std::move(out_list);
    }
    return y;
}

// Load-balancing penalty for a given gate matrix (rows on the simplex):
// lambda * N_e * sum_i mean_t(g_i)^2. Minimized (= lambda) by the uniform
// mean gate, maximized (= lambda * N_e) by a collapsed one.
inline double soft_moe_aux_loss(const Mat& gate_probs, double lambda_aux) {
    double sum_sq = 0.0;
    for (int e = 0; e < gate_probs.cols; ++e) {
        double m = 0.0;
        for (int t = 0; t < gate_probs.rows; ++t) m += gate_probs.at(t, e);
        m /= gate_probs.rows;
        sum_sq += m * m;
    }
    return lambda_aux * gate_probs.cols * sum_sq;
}

class TinyModel {
public:
    explicit TinyModel(const TinyConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix_seed(seed, "tinymodel-init"));
        auto frozen_init = [&](Tensor& t, std::string name, int r, int c,
                               double stddev) {
            t.init(std::move(name), r, c, false);
            for (double& v : t.value.d) v = normal(rng, 0.0, stddev);
        };
        auto trainable_init = [&](Tensor& t, std::string name, int r, int c,
                                  double stddev) {
            t.init(std::move(name), r, c, true);
            for (double& v : t.value.d) v = normal(rng, 0.0, stddev);
        };

        frozen_init(embed_, "embed", cfg_.vocab_size, cfg_.d_model, 0.02);
        frozen_init(pos_, "pos", cfg_.max_seq, cfg_.d_model, 0.02);

        layers_.resize(static_cast<std::size_t>(cfg_.n_layers));
        for (int l = 0; l < cfg_.n_layers; ++l) {
            auto& layer = layers_[static_cast<std::size_t>(l)];
            const std::string base = "layer" + std::to_string(l) + ".";
            auto ln_init = [&](LayerNormParams& p, const std::string& n) {
                p.gamma.init(base + n + ".gamma", 1, cfg_.d_model, false);
                std::fill(p.gamma.value.d.begin(), p.gamma.value.d.end(), 1.0);
                p.beta.init(base + n + ".beta", 1, cfg_.d_model, false);
            };
            ln_init(layer.ln1, "ln1");
            ln_init(layer.ln2, "ln2");
            auto lora_init = [&](LoRALinear& ll, const std::string& n) {
                frozen_init(ll.w, base + n + ".w", cfg_.d_model, cfg_.d_model, 0.02);
                trainable_init(ll.a, base + n + ".a", cfg_.d_model, cfg_.lora_rank,
                               0.02);
                // Zero B: the adapted layer starts as the frozen base map.
                ll.b.init(base + n + ".b", cfg_.lora_rank, cfg_.d_model, true);
            };
            lora_init(layer.wq, "attn.q");
            lora_init(layer.wk, "attn.k");
            lora_init(layer.wv, "attn.v");
            lora_init(layer.wo, "attn.o");

            trainable_init(layer.moe.gate, base + "moe.gate", cfg_.d_model,
                           cfg_.n_experts, 0.02);
            layer.moe.experts.resize(static_cast<std::size_t>(cfg_.n_experts));
            for (int e = 0; e < cfg_.n_experts; ++e) {
                auto& ex = layer.moe.experts[static_cast<std::size_t>(e)];
                const std::string eb = base + "moe.expert" + std::to_string(e) + ".";
                trainable_init(ex.u, eb + "u", cfg_.d_model, cfg_.expert_hidden,
                               0.05);
                ex.b1.init(eb + "b1", 1, cfg_.expert_hidden, true);
                trainable_init(ex.v, eb + "v", cfg_.expert_hidden, cfg_.d_model,
                               0.05);
                ex.b2.init(eb + "b2", 1, cfg_.d_model, true);
            }
        }
        ln_f_.gamma.init("ln_f.gamma", 1, cfg_.d_model, false);
        std::fill(ln_f_.gamma.value.d.begin(), ln_f_.gamma.value.d.end(), 1.0);
        ln_f_.beta.init("ln_f.beta", 1, cfg_.d_model, false);
        frozen_init(unembed_, "unembed", cfg_.d_model, cfg_.vocab_size, 0.02);
    }

    const TinyConfig& config() const { return cfg_; }

    // Fixed enumeration order; checkpoints, optimizers and the gradient
    // check all iterate this list.
    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out = {&embed_, &pos_};
        for (auto& layer : layers_) {
            out.push_back(&layer.ln1.gamma);
            out.push_back(&layer.ln1.beta);
            for (LoRALinear* ll : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) {
                out.push_back(&ll->w);
                out.push_back(&ll->a);
                out.push_back(&ll->b);
            }
            out.push_back(&layer.ln2.gamma);
            out.push_back(&layer.ln2.beta);
            out.push_back(&layer.moe.gate);
            for (auto& ex : layer.moe.experts) {
                out.push_back(&ex.u);
                out.push_back(&ex.b1);
                out.push_back(&ex.v);
                out.push_back(&ex.b2);
            }
        }
        out.push_back(&ln_f_.gamma);
        out.push_back(&ln_f_.beta);
        out.push_back(&unembed_);
        return out;
    }

    std::vector<Tensor*> trainable_tensors() {
        std::vector<Tensor*> out;
        for (Tensor* t : tensors())
            if (t->trainable) out.push_back(t);
        return out;
    }

    void zero_grads() {
        for (Tensor* t : tensors()) t->grad.zero();
    }

    // Causal decoder forward. Returns logits [T x vocab]; adds each block's
    // auxiliary loss into *aux_total when given.
    Mat forward(const std::vector<int>& tokens, bool training = false,
                Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr,
                double* aux_total = nullptr) const {
        using namespace matops;
        const int T = static_cast<int>(tokens.size());
        if (T == 0) throw std::invalid_argument("forward: empty token sequence");
        if (T > cfg_.max_seq)
            throw std::invalid_argument("forward: sequence longer than max_seq");
        for (int tok : tokens)
            if (tok < 0 || tok >= cfg_.vocab_size)
                throw std::invalid_argument("forward: token id out of range");

        if (cache) {
            cache->tokens = tokens;
            cache->layers.assign(layers_.size(), LayerCache{});
            cache->training = training;
        }
        if (aux_total) *aux_total = 0.0;

        Mat h(T, cfg_.d_model);
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < cfg_.d_model; ++j)
                h.at(t, j) = embed_.value.at(tokens[static_cast<std::size_t>(t)], j) +
                             pos_.value.at(t, j);

        const int Dh = cfg_.d_model / cfg_.n_heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(Dh));
        const double scale = cfg_.lora_scale();

        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const TransformerLayer& layer = layers_[li];
            LayerCache* lc = cache ? &cache->layers[li] : nullptr;
            if (lc) lc->h_in = h;

            Mat x1 = nn::layer_norm(h, layer.ln1, lc ? &lc->ln1 : nullptr);
            Mat q = nn::lora_forward(x1, layer.wq, scale, cfg_.lora_dropout,
                                     training, dropout_rng, lc ? &lc->q : nullptr);
            Mat k = nn::lora_forward(x1, layer.wk, scale, cfg_.lora_dropout,
                                     training, dropout_rng, lc ? &lc->k : nullptr);
            Mat v = nn::lora_forward(x1, layer.wv, scale, cfg_.lora_dropout,
                                     training, dropout_rng, lc ? &lc->v : nullptr);

            Mat ctx(T, cfg_.d_model);
            std::vector<Mat> probs_per_head;
            for (int head = 0; head < cfg_.n_heads; ++head) {
                const int off = head * Dh;
                Mat scores(T, T);
                for (int i = 0; i < T; ++i) {
                    for (int j = 0; j <= i; ++j) {
                        double s = 0.0;
                        for (int d = 0; d < Dh; ++d)
                            s += q.at(i, off + d) * k.at(j, off + d);
                        scores.at(i, j) = s * inv_sqrt_dh;
                    }
                    for (int j = i + 1; j < T; ++j)
                        scores.at(i, j) = -std::numeric_limits<double>::infinity();
                }
                nn::softmax_rows(scores);
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j <= i; ++j) {
                        const double p = scores.at(i, j);
                        if (p == 0.0) continue;
                        for (int d = 0; d < Dh; ++d)
                            ctx.at(i, off + d) += p * v.at(j, off + d);
                    }
                if (lc) probs_per_head.push_back(std::move(scores));
            }
            Mat attn_out = nn::lora_forward(ctx, layer.wo, scale, cfg_.lora_dropout,
                                            training, dropout_rng,
                                            lc ? &lc->o : nullptr);
            add_inplace(h, attn_out);
            if (lc) {
                lc->x1 = std::move(x1);
                lc->qm = std::move(q);
                lc->km = std::move(k);
                lc->vm = std::move(v);
                lc->attn_probs = std::move(probs_per_head);
                lc->ctx = std::move(ctx);
                lc->h_mid = h;
            }

            Mat x2 = nn::layer_norm(h, layer.ln2, lc ? &lc->ln2 : nullptr);
            double aux = 0.0;
            Mat moe_out = soft_moe_forward(x2, layer.moe, cfg_.lambda_aux,
                                           aux_total ? &aux : nullptr,
                                           lc ? &lc->moe : nullptr);
            if (aux_total) *aux_total += aux;
            add_inplace(h, moe_out);
        }

        Mat h_final = nn::layer_norm(h, ln_f_, cache ? &cache->lnf : nullptr);
        Mat logits = matmul(h_final, unembed_.value);
        if (cache) cache->h_final = std::move(h_final);
        return logits;
    }

    // Backpropagates dL/dlogits through the cached forward pass, accumulating
    // into every trainable tensor's grad. The blocks' auxiliary losses are
    // part of the training loss; aux_weight is the coefficient this
    // sequence's aux terms carry in the total (1/batch for a batch mean).
    void backward(const ForwardCache& cache, const Mat& dlogits,
                  double aux_weight = 1.0) {
        using namespace matops;
        const int T = static_cast<int>(cache.tokens.size());
        const int Dh = cfg_.d_model / cfg_.n_heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(Dh));
        const double scale = cfg_.lora_scale();

        Mat dh = matmul_nt(dlogits, unembed_.value);
        dh = nn::layer_norm_backward(dh, ln_f_, cache.lnf);

        for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
            TransformerLayer& layer = layers_[static_cast<std::size_t>(li)];
            const LayerCache& lc = cache.layers[static_cast<std::size_t>(li)];

            // MoE block: h_out = h_mid + moe(ln2(h_mid))
            Mat dmoe = dh;  // gradient of the residual branch
            Mat dx2(T, cfg_.d_model);
            {
                const SoftMoECache& mc = lc.moe;
                const int E = cfg_.n_experts;
                Mat dgate(T, E);
                // Aux-loss path: d aux / d g_{t,e} = 2 lambda E m_e / T.
                for (int e = 0; e < E; ++e) {
                    double m = 0.0;
                    for (int t = 0; t < T; ++t) m += mc.gate_probs.at(t, e);
                    m /= T;
                    const double daux =
                        aux_weight * 2.0 * cfg_.lambda_aux * E * m / T;
                    for (int t = 0; t < T; ++t) dgate.at(t, e) = daux;
                }
                for (int e = 0; e < E; ++e) {
                    ExpertFFN& ex = layer.moe.experts[static_cast<std::size_t>(e)];
                    const Mat& out = mc.expert_out[static_cast<std::size_t>(e)];
                    // Mixture path.
                    Mat dout(T, cfg_.d_model);
                    for (int t = 0; t < T; ++t) {
                        const double g = mc.gate_probs.at(t, e);
                        double dot = 0.0;
                        for (int j = 0; j < cfg_.d_model; ++j) {
                            dout.at(t, j) = g * dmoe.at(t, j);
                            dot += dmoe.at(t, j) * out.at(t, j);
                        }
                        dgate.at(t, e) += dot;
                    }
                    // Expert FFN backward.
                    const Mat& a = mc.expert_a[static_cast<std::size_t>(e)];
                    const Mat& s = mc.expert_s[static_cast<std::size_t>(e)];
                    add_inplace(ex.v.grad, matmul_tn(a, dout));
                    add_inplace(ex.b2.grad, col_sums(dout));
                    Mat da = matmul_nt(dout, ex.v.value);
                    for (std::size_t i = 0; i < da.d.size(); ++i)
                        da.d[i] *= nn::gelu_grad(s.d[i]);
                    add_inplace(ex.u.grad, matmul_tn(mc.x, da));
                    add_inplace(ex.b1.grad, col_sums(da));
                    add_inplace(dx2, matmul_nt(da, ex.u.value));
                }
                nn::softmax_backward_rows(mc.gate_probs, dgate);
                add_inplace(layer.moe.gate.grad, matmul_tn(mc.x, dgate));
                add_inplace(dx2, matmul_nt(dgate, layer.moe.gate.value));
            }
            add_inplace(dh, nn::layer_norm_backward(dx2, layer.ln2, lc.ln2));

            // Attention block: h_mid = h_in + wo(ctx(q,k,v))
            Mat dctx = nn::lora_backward(dh, layer.wo, scale, lc.o);
            Mat dq(T, cfg_.d_model), dk(T, cfg_.d_model), dv(T, cfg_.d_model);
            for (int head = 0; head < cfg_.n_heads; ++head) {
                const int off = head * Dh;
                const Mat& probs = lc.attn_probs[static_cast<std::size_t>(head)];
                Mat dprobs(T, T);
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j <= i; ++j) {
                        double s = 0.0;
                        for (int d = 0; d < Dh; ++d)
                            s += dctx.at(i, off + d) * lc.vm.at(j, off + d);
                        dprobs.at(i, j) = s;
                    }
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j <= i; ++j) {
                        const double p = probs.at(i, j);
                        if (p == 0.0) continue;
                        for (int d = 0; d < Dh; ++d)
                            dv.at(j, off + d) += p * dctx.at(i, off + d);
                    }
                nn::softmax_backward_rows(probs, dprobs);
                for (int i = 0; i < T; ++i)
                    for (int j = 0; j <= i; ++j) {
                        const double ds = dprobs.at(i, j) * inv_sqrt_dh;
                        if (ds == 0.0) continue;
                        for (int d = 0; d < Dh; ++d) {
                            dq.at(i, off + d) += ds * lc.km.at(j, off + d);
                            dk.at(j, off + d) += ds * lc.qm.at(i, off + d);
                        }
                    }
            }
            Mat dx1 = nn::lora_backward(dq, layer.wq, scale, lc.q);
            add_inplace(dx1, nn::lora_backward(dk, layer.wk, scale, lc.k));
            add_inplace(dx1, nn::lora_backward(dv, layer.wv, scale, lc.v));
            add_inplace(dh, nn::layer_norm_backward(dx1, layer.ln1, lc.ln1));
        }
        // dh now reaches the (frozen) embeddings; nothing left to accumulate.
    }

    // Convenience single-op surface matching the block-level contracts.
    Mat lora_op_forward(const Mat& x, const LoRALinear& layer, bool training,
                        Rng* rng) const {
        return nn::lora_forward(x, layer, cfg_.lora_scale(), cfg_.lora_dropout,
                                training, rng, nullptr);
    }

    const std::vector<TransformerLayer>& layers() const { return layers_; }
    std::vector<TransformerLayer>& layers() { return layers_; }

private:
    TinyConfig cfg_;
    Tensor embed_, pos_;
    std::vector<TransformerLayer> layers_;
    LayerNormParams ln_f_;
    Tensor unembed_;
};

struct LossBreakdown {
    double total = 0.0;
    double data = 0.0;  // CE (plus KL when distilling)
    double aux = 0.0;
};

// Mean next-token cross-entropy over the batch plus the per-sequence
// auxiliary losses; accumulates exact gradients for all trainable tensors.
// Sequences must have at least two tokens.
inline LossBreakdown lm_loss_and_grads(TinyModel& model,
                                       const std::vector<std::vector<int>>& batch,
                                       bool training = false,
                                       Rng* dropout_rng = nullptr) {
    if (batch.empty()) throw std::invalid_argument("lm_loss: empty batch");
    LossBreakdown out;
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const auto& tokens : batch) {
        const int T = static_cast<int>(tokens.size());
        if (T < 2)
            throw std::invalid_argument("lm_loss: need at least 2 tokens");
        ForwardCache cache;
        double aux = 0.0;
        Mat logits = model.forward(tokens, training, dropout_rng, &cache, &aux);

        Mat dlogits(logits.rows, logits.cols);
        const double w = inv_batch / static_cast<double>(T - 1);
        double ce = 0.0;
        for (int t = 0; t + 1 < T; ++t) {
            double mx = logits.at(t, 0);
            for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(t, j));
            double sum = 0.0;
            for (int j = 0; j < logits.cols; ++j)
                sum += std::exp(logits.at(t, j) - mx);
            const double log_z = mx + std::log(sum);
            const int target = tokens[static_cast<std::size_t>(t) + 1];
            ce += log_z - logits.at(t, target);
            for (int j = 0; j < logits.cols; ++j)
                dlogits.at(t, j) = std::exp(logits.at(t, j) - log_z) * w;
            dlogits.at(t, target) -= w;
        }
        ce /= static_cast<double>(T - 1);
        model.backward(cache, dlogits, inv_batch);
        out.data += ce * inv_batch;
        out.aux += aux * inv_batch;
    }
    out.total = out.data + out.aux;
    return out;
}

struct ParamCount {
    std::int64_t trainable = 0;
    std::int64_t total = 0;

    double fraction() const {
        return total == 0 ? 0.0
                          : static_cast<double>(trainable) /
                                static_cast<double>(total);
    }
};

inline ParamCount count_trainable(TinyModel& model) {
    ParamCount c;
    for (Tensor* t : model.tensors()) {
        const auto n = static_cast<std::int64_t>(t->value.size());
        c.total += n;
        if (t->trainable) c.trainable += n;
    }
    return c;
}

// Grad-check helper: zero-init B matrices make every dL/dA identically zero,
// so checks re-randomize the adapters first.
inline void randomize_adapters(TinyModel& model, Rng& rng, double stddev = 0.02) {
    for (Tensor* t : model.trainable_tensors())
        if (t->name.size() > 2 && t->name.substr(t->name.size() - 2) == ".b" &&
            t->name.find("attn") != std::string::npos)
            for (double& v : t->value.d) v = normal(rng, 0.0, stddev);
}

// ---------------------------------------------------------------------------
// Flat named-tensor checkpoint container: 8-byte little-endian header length,
// JSON header (names, shapes, dtype, offsets), then raw row-major f64 bytes.

inline void save_tensors(TinyModel& model, const std::filesystem::path& file) {
    json header;
    header["format"] = "logatlas-tensors-v1";
    header["tensors"] = json::array();
    std::size_t offset = 0;
    for (Tensor* t : model.tensors()) {
        const std::size_t nbytes = t->value.size() * sizeof(double);
        header["tensors"].push_back(json{{"name", t->name},
                                         {"dtype", "f64"},
                                         {"shape", {t->value.rows, t->value.cols}},
                                         {"offset", offset},
                                         {"nbytes", nbytes},
                                         {"trainable", t->trainable}});
        offset += nbytes;
    }
    const std::string head = header.dump();
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    const std::uint64_t head_len = head.size();
    char lenbuf[8];
    for (int i = 0; i < 8; ++i)
        lenbuf[i] = static_cast<char>((head_len >> (8 * i)) & 0xff);
    out.write(lenbuf, 8);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (Tensor* t : model.tensors())
        out.write(reinterpret_cast<const char*>(t->value.d.data()),
                  static_cast<std::streamsize>(t->value.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + file.string());
}

inline void load_tensors(TinyModel& model, const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    char lenbuf[8];
    in.read(lenbuf, 8);
    if (!in) throw std::runtime_error("checkpoint truncated: " + file.string());
    std::uint64_t head_len = 0;
    for (int i = 0; i < 8; ++i)
        head_len |= static_cast<std::uint64_t>(
                        static_cast<unsigned char>(lenbuf[i]))
                    << (8 * i);
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!in) throw std::runtime_error("checkpoint truncated: " + file.string());
    const json header = json::parse(head);
    if (header.at("format").get<std::string>() != "logatlas-tensors-v1")
        throw std::runtime_error("unknown checkpoint format");

    std::map<std::string, Tensor*> by_name;
    for (Tensor* t : model.tensors()) by_name[t->name] = t;
    const std::streampos payload_start = in.tellg();
    for (const auto& entry : header.at("tensors")) {
        const auto name = entry.at("name").get<std::string>();
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw std::runtime_error("checkpoint tensor not in model: " + name);
        Tensor* t = it->second;
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape.size() != 2 || shape[0] != t->value.rows ||
            shape[1] != t->value.cols)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        in.seekg(payload_start +
                 static_cast<std::streamoff>(entry.at("offset").get<std::size_t>()));
        in.read(reinterpret_cast<char*>(t->value.d.data()),
                static_cast<std::streamsize>(t->value.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint truncated at " + name);
    }
}

}  // namespace logatlas
