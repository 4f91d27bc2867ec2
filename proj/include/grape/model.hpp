#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grape/error.hpp"
#include "grape/graph.hpp"
#include "grape/matcher.hpp"
#include "grape/matrix.hpp"

namespace grape {

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t hidden = 16;
    double dropout = 0.5;
    double weight_decay = 5e-5;
    double learning_rate = 0.01;
    double lr_decay = 0.5;
    std::size_t lr_decay_every = 100;
    std::size_t max_epochs = 500;
    std::size_t patience = 50;
    std::uint64_t seed = 0;
    // Feed each channel its own previous-layer output instead of the fused one.
    bool per_channel_history = false;
    // Baseline switches: with both off and a single edge template the
    // network is a sum-aggregation MPNN.
    bool use_se = true;
    bool learn_orbit_weights = true;
    double se_init_noise = 0.01;

    void validate() const {
        if (layers < 1) throw InputError("layers must be >= 1");
        if (hidden < 1) throw InputError("hidden size must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw InputError("dropout must be in [0, 1)");
        if (!(weight_decay >= 0.0)) throw InputError("weight decay must be >= 0");
        if (!(learning_rate > 0.0)) throw InputError("learning rate must be > 0");
        if (!(lr_decay > 0.0) || lr_decay_every < 1) throw InputError("bad learning-rate schedule");
        if (max_epochs < 1 || patience < 1) throw InputError("epochs and patience must be >= 1");
    }
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return nlohmann::json{{"layers", c.layers},
                          {"hidden", c.hidden},
                          {"dropout", c.dropout},
                          {"weight_decay", c.weight_decay},
                          {"learning_rate", c.learning_rate},
                          {"lr_decay", c.lr_decay},
                          {"lr_decay_every", c.lr_decay_every},
                          {"max_epochs", c.max_epochs},
                          {"patience", c.patience},
                          {"seed", c.seed},
                          {"per_channel_history", c.per_channel_history},
                          {"use_se", c.use_se},
                          {"learn_orbit_weights", c.learn_orbit_weights}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.layers = j.at("layers");
    c.hidden = j.at("hidden");
    c.dropout = j.at("dropout");
    c.weight_decay = j.at("weight_decay");
    c.learning_rate = j.at("learning_rate");
    c.lr_decay = j.at("lr_decay");
    c.lr_decay_every = j.at("lr_decay_every");
    c.max_epochs = j.at("max_epochs");
    c.patience = j.at("patience");
    c.seed = j.at("seed");
    c.per_channel_history = j.at("per_channel_history");
    c.use_se = j.at("use_se");
    c.learn_orbit_weights = j.at("learn_orbit_weights");
    return c;
}

// ---------------------------------------------------------------------------
// Parameters

struct ChannelParams {
    Matrix beta;  // 1 x m_l orbit weights
    Matrix w_a, b_a, w_b, b_b;
};

struct LayerParams {
    std::vector<ChannelParams> channels;
    Matrix se_w1, se_w2;  // L x L
};

struct HeadParams {
    Matrix w_c, b_c, w_d, b_d;
};

enum class TensorKind { OrbitWeight, Weight, Bias, SeWeight };

template <typename M>
struct BasicTensorRef {
    std::string name;
    M* value;
    TensorKind kind;
};
using TensorRef = BasicTensorRef<Matrix>;
using ConstTensorRef = BasicTensorRef<const Matrix>;

// All learnable tensors of one network, also used for gradients and
// optimizer moments (same shapes).
struct ParameterSet {
    std::vector<LayerParams> layers;
    HeadParams head;

    std::vector<TensorRef> tensors() { return collect<Matrix>(*this); }
    std::vector<ConstTensorRef> tensors() const { return collect<const Matrix>(*this); }

    // Zero-filled copy with identical shapes.
    ParameterSet zeros_like() const {
        ParameterSet z = *this;
        for (auto& t : z.tensors()) t.value->fill(0.0);
        return z;
    }

private:
    template <typename M, typename Self>
    static std::vector<BasicTensorRef<M>> collect(Self& self) {
        std::vector<BasicTensorRef<M>> out;
        for (std::size_t k = 0; k < self.layers.size(); ++k) {
            auto& lp = self.layers[k];
            const std::string lk = "layer" + std::to_string(k);
            for (std::size_t l = 0; l < lp.channels.size(); ++l) {
                auto& c = lp.channels[l];
                const std::string p = lk + ".t" + std::to_string(l) + ".";
                out.push_back({p + "beta", &c.beta, TensorKind::OrbitWeight});
                out.push_back({p + "w_a", &c.w_a, TensorKind::Weight});
                out.push_back({p + "b_a", &c.b_a, TensorKind::Bias});
                out.push_back({p + "w_b", &c.w_b, TensorKind::Weight});
                out.push_back({p + "b_b", &c.b_b, TensorKind::Bias});
            }
            out.push_back({lk + ".se_w1", &lp.se_w1, TensorKind::SeWeight});
            out.push_back({lk + ".se_w2", &lp.se_w2, TensorKind::SeWeight});
        }
        out.push_back({"head.w_c", &self.head.w_c, TensorKind::Weight});
        out.push_back({"head.b_c", &self.head.b_c, TensorKind::Bias});
        out.push_back({"head.w_d", &self.head.w_d, TensorKind::Weight});
        out.push_back({"head.b_d", &self.head.b_d, TensorKind::Bias});
        return out;
    }
};

// The GRAPE network: per-layer per-template AE-aware aggregators, SE fusion,
// two-layer classifier head.
class GrapeModel {
public:
    GrapeModel() = default;

    // orbit_counts[l] = m_l for template l.
    GrapeModel(const ModelConfig& cfg, std::vector<std::size_t> orbit_counts, std::size_t in_dim,
               std::size_t num_classes)
        : cfg_(cfg), orbit_counts_(std::move(orbit_counts)), in_dim_(in_dim), classes_(num_classes) {
        cfg_.validate();
        if (orbit_counts_.empty()) throw InputError("model needs at least one template");
        if (in_dim_ == 0 || classes_ < 1) throw InputError("bad model input/output size");
        init(cfg_.seed);
    }

    const ModelConfig& config() const noexcept { return cfg_; }
    std::size_t num_templates() const noexcept { return orbit_counts_.size(); }
    const std::vector<std::size_t>& orbit_counts() const noexcept { return orbit_counts_; }
    std::size_t in_dim() const noexcept { return in_dim_; }
    std::size_t num_classes() const noexcept { return classes_; }
    ParameterSet& params() noexcept { return params_; }
    const ParameterSet& params() const noexcept { return params_; }

    void init(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        const std::size_t L = num_templates(), H = cfg_.hidden;
        params_ = ParameterSet{};
        for (std::size_t k = 0; k < cfg_.layers; ++k) {
            LayerParams lp;
            for (std::size_t l = 0; l < L; ++l) {
                const std::size_t in = (k == 0) ? in_dim_ : H;
                ChannelParams c;
                const std::size_t m = orbit_counts_[l];
                c.beta = Matrix(1, m, cfg_.learn_orbit_weights ? 1.0 / static_cast<double>(m) : 1.0);
                c.w_a = fan_in_uniform(H, in, in, rng);
                c.b_a = fan_in_uniform(1, H, in, rng);
                c.w_b = fan_in_uniform(H, H, H, rng);
                c.b_b = fan_in_uniform(1, H, H, rng);
                lp.channels.push_back(std::move(c));
            }
            std::normal_distribution<double> noise(0.0, cfg_.se_init_noise);
            lp.se_w1 = Matrix(L, L);
            lp.se_w2 = Matrix(L, L);
            for (std::size_t i = 0; i < L; ++i)
                for (std::size_t j = 0; j < L; ++j) {
                    lp.se_w1(i, j) = (i == j ? 1.0 : 0.0) + noise(rng);
                    lp.se_w2(i, j) = (i == j ? 1.0 : 0.0) + noise(rng);
                }
            params_.layers.push_back(std::move(lp));
        }
        params_.head.w_c = fan_in_uniform(H, H, H, rng);
        params_.head.b_c = fan_in_uniform(1, H, H, rng);
        params_.head.w_d = fan_in_uniform(classes_, H, H, rng);
        params_.head.b_d = fan_in_uniform(1, classes_, H, rng);
    }

    // Whether a tensor is trained under this config.
    bool trainable(TensorKind kind) const noexcept {
        if (kind == TensorKind::OrbitWeight) return cfg_.learn_orbit_weights;
        if (kind == TensorKind::SeWeight) return cfg_.use_se;
        return true;
    }

    // Whether a tensor enters the L2 penalty: trainable weight matrices.
    bool decayed(TensorKind kind) const noexcept {
        return trainable(kind) && (kind == TensorKind::Weight || kind == TensorKind::SeWeight);
    }

    double l2_penalty() const {
        double s = 0.0;
        for (const auto& t : params_.tensors())
            if (decayed(t.kind)) s += linalg::sum_squares(*t.value);
        return cfg_.weight_decay * s;
    }

private:
    static Matrix fan_in_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                                 std::mt19937_64& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Matrix m(rows, cols);
        for (double& v : m.values()) v = u(rng);
        return m;
    }

    ModelConfig cfg_;
    std::vector<std::size_t> orbit_counts_;
    std::size_t in_dim_ = 0;
    std::size_t classes_ = 0;
    ParameterSet params_;
};

// ---------------------------------------------------------------------------
// Reference operators

using Mlp = std::function<std::vector<double>(std::span<const double>)>;

// out[v] = mlp(sum_j beta[j] * sum_{u in A_j(v)} h_prev[u]); nodes are summed
// in ascending id order and empty orbits add nothing.
inline Matrix aggregate_ae(const Matrix& h_prev, const EgoAeIndex& idx, std::span<const double> beta,
                           const Mlp& mlp) {
    if (h_prev.rows() != idx.num_egos()) throw InputError("aggregate_ae: row count mismatch");
    if (beta.size() != idx.num_orbits()) throw InputError("aggregate_ae: beta size mismatch");
    Matrix out;
    std::vector<double> z(h_prev.cols()), s(h_prev.cols());
    for (NodeId v = 0; v < idx.num_egos(); ++v) {
        std::fill(z.begin(), z.end(), 0.0);
        const auto& sets = idx.ae_sets(v);
        for (std::size_t j = 0; j < sets.size(); ++j) {
            std::fill(s.begin(), s.end(), 0.0);
            for (NodeId u : sets[j]) {
                auto r = h_prev.row(u);
                for (std::size_t c = 0; c < s.size(); ++c) s[c] += r[c];
            }
            for (std::size_t c = 0; c < z.size(); ++c) z[c] += beta[j] * s[c];
        }
        auto y = mlp(z);
        if (out.empty()) out = Matrix(idx.num_egos(), y.size());
        std::copy(y.begin(), y.end(), out.row(v).begin());
    }
    return out;
}

// gamma[l] = mean over nodes and coordinates of channel l;
// alpha = ReLU(W2 ReLU(W1 gamma)).
struct SeResult {
    std::vector<double> gamma, hidden_pre, hidden, out_pre, alpha;
};

inline SeResult se_weights(std::span<const Matrix> channels, const Matrix& w1, const Matrix& w2) {
    const std::size_t L = channels.size();
    if (L == 0 || w1.rows() != L || w1.cols() != L || w2.rows() != L || w2.cols() != L)
        throw InputError("se_weights: shape mismatch");
    SeResult r;
    r.gamma.assign(L, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        if (channels[l].rows() != channels[0].rows() || channels[l].cols() != channels[0].cols())
            throw InputError("se_weights: channel shapes differ");
        double s = 0.0;
        for (double v : channels[l].values()) s += v;
        r.gamma[l] = s / static_cast<double>(channels[l].size());
    }
    auto matvec = [L](const Matrix& w, const std::vector<double>& x) {
        std::vector<double> y(L, 0.0);
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j) y[i] += w(i, j) * x[j];
        return y;
    };
    r.hidden_pre = matvec(w1, r.gamma);
    r.hidden = r.hidden_pre;
    for (double& v : r.hidden) v = v > 0.0 ? v : 0.0;
    r.out_pre = matvec(w2, r.hidden);
    r.alpha = r.out_pre;
    for (double& v : r.alpha) v = v > 0.0 ? v : 0.0;
    return r;
}

// h[v] = sum_l alpha[l] * h_l[v]
inline Matrix fuse(std::span<const Matrix> channels, std::span<const double> alpha) {
    if (channels.empty() || alpha.size() != channels.size()) throw InputError("fuse: shape mismatch");
    Matrix out(channels[0].rows(), channels[0].cols());
    for (std::size_t l = 0; l < channels.size(); ++l) {
        if (channels[l].rows() != out.rows() || channels[l].cols() != out.cols())
            throw InputError("fuse: channel shapes differ");
        auto src = channels[l].values();
        auto dst = out.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha[l] * src[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forward

struct ChannelTrace {
    const Matrix* input = nullptr;
    std::vector<Matrix> orbit_sums;  // per orbit: sum of projected inputs over A_j(v)
    Matrix pre_hidden, hidden, pre_out, out;
};

struct LayerTrace {
    std::vector<ChannelTrace> channels;
    SeResult se;
    Matrix fused;
    Matrix dropout_mask;  // empty when no dropout was applied
    Matrix output;        // h^k
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    Matrix head_pre, head_hidden, logits;

    const Matrix& embeddings() const { return layers.back().output; }
    std::vector<std::vector<double>> alphas() const {
        std::vector<std::vector<double>> out;
        for (const auto& l : layers) out.push_back(l.se.alpha);
        return out;
    }
};

using IndexList = std::vector<const EgoAeIndex*>;

namespace detail {

inline void check_finite(const Matrix& m, const std::string& where) {
    if (!m.all_finite()) throw NumericError("non-finite value in " + where);
}

}  // namespace detail

// One pass of the network. Dropout on each fused layer output is applied
// only when `dropout_rng` is given (training mode).
inline ForwardTrace forward(const GrapeModel& model, const IndexList& indices, const Matrix& x,
                            std::mt19937_64* dropout_rng = nullptr) {
    const auto& cfg = model.config();
    const std::size_t L = model.num_templates();
    if (indices.size() != L) throw InputError("forward: expected one index per template");
    if (x.cols() != model.in_dim()) throw InputError("forward: feature dimension mismatch");
    for (std::size_t l = 0; l < L; ++l) {
        if (indices[l]->num_egos() != x.rows())
            throw InputError("forward: index and feature row counts differ");
        if (indices[l]->num_orbits() != model.orbit_counts()[l])
            throw InputError("forward: template orbit count differs from model");
    }
    const auto& P = model.params();
    ForwardTrace tr;
    tr.layers.resize(cfg.layers);
    for (std::size_t k = 0; k < cfg.layers; ++k) {
        auto& lt = tr.layers[k];
        const auto& lp = P.layers[k];
        lt.channels.resize(L);
        std::vector<Matrix> outs(L);
        for (std::size_t l = 0; l < L; ++l) {
            auto& ct = lt.channels[l];
            const auto& cp = lp.channels[l];
            const EgoAeIndex& idx = *indices[l];
            if (k == 0)
                ct.input = &x;
            else if (cfg.per_channel_history)
                ct.input = &tr.layers[k - 1].channels[l].out;
            else
                ct.input = &tr.layers[k - 1].output;
            // Project first, then aggregate: sum_u W h_u = W sum_u h_u.
            Matrix proj = linalg::affine(*ct.input, cp.w_a, {});
            const std::size_t H = proj.cols(), m = idx.num_orbits();
            ct.orbit_sums.assign(m, Matrix(x.rows(), H));
            ct.pre_hidden = Matrix(x.rows(), H);
            for (NodeId v = 0; v < x.rows(); ++v) {
                const auto& sets = idx.ae_sets(v);
                auto ph = ct.pre_hidden.row(v);
                for (std::size_t c = 0; c < H; ++c) ph[c] = cp.b_a(0, c);
                for (std::size_t j = 0; j < m; ++j) {
                    auto s = ct.orbit_sums[j].row(v);
                    for (NodeId u : sets[j]) {
                        auto r = proj.row(u);
                        for (std::size_t c = 0; c < H; ++c) s[c] += r[c];
                    }
                    const double b = cp.beta(0, j);
                    for (std::size_t c = 0; c < H; ++c) ph[c] += b * s[c];
                }
            }
            // Checked before ReLU, which would map NaN to 0.
            const std::string where = "layer " + std::to_string(k + 1) + " template " + std::to_string(l);
            detail::check_finite(ct.pre_hidden, where);
            ct.hidden = ct.pre_hidden;
            linalg::relu_inplace(ct.hidden);
            ct.pre_out = linalg::affine(ct.hidden, cp.w_b, cp.b_b.row(0));
            detail::check_finite(ct.pre_out, where);
            ct.out = ct.pre_out;
            linalg::relu_inplace(ct.out);
            outs[l] = ct.out;
        }
        if (cfg.use_se) {
            lt.se = se_weights(outs, lp.se_w1, lp.se_w2);
            for (double v : lt.se.out_pre)
                if (!std::isfinite(v))
                    throw NumericError("non-finite value in layer " + std::to_string(k + 1) + " SE weights");
        } else {
            lt.se.gamma.assign(L, 0.0);
            lt.se.alpha.assign(L, 1.0);
        }
        lt.fused = fuse(outs, lt.se.alpha);
        lt.output = lt.fused;
        if (dropout_rng && cfg.dropout > 0.0) {
            lt.dropout_mask = Matrix(lt.fused.rows(), lt.fused.cols());
            std::bernoulli_distribution keep(1.0 - cfg.dropout);
            const double scale = 1.0 / (1.0 - cfg.dropout);
            auto mask = lt.dropout_mask.values();
            auto out = lt.output.values();
            for (std::size_t i = 0; i < mask.size(); ++i) {
                mask[i] = keep(*dropout_rng) ? scale : 0.0;
                out[i] *= mask[i];
            }
        }
        detail::check_finite(lt.output, "layer " + std::to_string(k + 1) + " fused output");
    }
    tr.head_pre = linalg::affine(tr.layers.back().output, P.head.w_c, P.head.b_c.row(0));
    detail::check_finite(tr.head_pre, "classifier hidden layer");
    tr.head_hidden = tr.head_pre;
    linalg::relu_inplace(tr.head_hidden);
    tr.logits = linalg::affine(tr.head_hidden, P.head.w_d, P.head.b_d.row(0));
    detail::check_finite(tr.logits, "classifier logits");
    return tr;
}

// ---------------------------------------------------------------------------
// Loss and backward

struct LossResult {
    double loss = 0.0;          // data term + penalty
    double data_loss = 0.0;     // mean cross-entropy over the given nodes
    double penalty = 0.0;
    ParameterSet grads;
};

// Mean softmax cross-entropy over `nodes` plus L2 penalty, with gradients
// of every parameter by reverse-mode differentiation of `trace`.
inline LossResult loss_and_gradients(const GrapeModel& model, const ForwardTrace& tr,
                                     const IndexList& indices, const LabelVector& labels,
                                     std::span<const NodeId> nodes) {
    const auto& cfg = model.config();
    const auto& P = model.params();
    const std::size_t L = model.num_templates();
    if (nodes.empty()) throw InputError("loss needs at least one training node");
    LossResult res;
    res.grads = P.zeros_like();
    auto& G = res.grads;

    // Cross-entropy on logits.
    Matrix d_logits(tr.logits.rows(), tr.logits.cols());
    const double inv = 1.0 / static_cast<double>(nodes.size());
    for (NodeId v : nodes) {
        const int y = labels.labels[v];
        if (y < 0 || static_cast<std::size_t>(y) >= tr.logits.cols())
            throw InputError("loss: node " + std::to_string(v) + " has no valid label");
        auto z = tr.logits.row(v);
        double mx = *std::max_element(z.begin(), z.end());
        double se = 0.0;
        for (double t : z) se += std::exp(t - mx);
        const double lse = mx + std::log(se);
        res.data_loss += (lse - z[static_cast<std::size_t>(y)]) * inv;
        auto d = d_logits.row(v);
        for (std::size_t c = 0; c < z.size(); ++c) d[c] = std::exp(z[c] - lse) * inv;
        d[static_cast<std::size_t>(y)] -= inv;
    }
    res.penalty = model.l2_penalty();
    res.loss = res.data_loss + res.penalty;

    // Head.
    Matrix d_hidden = linalg::affine_backward(tr.head_hidden, P.head.w_d, d_logits, G.head.w_d,
                                              G.head.b_d.row(0));
    auto dh = d_hidden.values();
    auto pre = tr.head_pre.values();
    for (std::size_t i = 0; i < dh.size(); ++i)
        if (pre[i] <= 0.0) dh[i] = 0.0;
    Matrix d_out = linalg::affine_backward(tr.layers.back().output, P.head.w_c, d_hidden,
                                           G.head.w_c, G.head.b_c.row(0));

    // Layers, last to first. d_out = gradient wrt h^k; extra[l] = gradient
    // wrt channel outputs coming from the next layer (per-channel history).
    std::vector<Matrix> extra(L);
    for (std::size_t kk = cfg.layers; kk-- > 0;) {
        const auto& lt = tr.layers[kk];
        const auto& lp = P.layers[kk];
        auto& lg = G.layers[kk];

        Matrix d_fused = d_out;
        if (!d_fused.empty() && !lt.dropout_mask.empty()) {
            auto g = d_fused.values();
            auto mask = lt.dropout_mask.values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
        }

        std::vector<Matrix> d_ch(L);
        std::vector<double> d_alpha(L, 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            const auto& out = lt.channels[l].out;
            d_ch[l] = extra[l].empty() ? Matrix(out.rows(), out.cols()) : extra[l];
            if (d_fused.empty()) continue;
            auto g = d_fused.values();
            auto o = out.values();
            auto dc = d_ch[l].values();
            const double a = lt.se.alpha[l];
            double da = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                da += g[i] * o[i];
                dc[i] += a * g[i];
            }
            d_alpha[l] = da;
        }

        if (cfg.use_se && !d_fused.empty()) {
            const auto& se = lt.se;
            std::vector<double> d_out_pre(L), d_hid(L, 0.0), d_hid_pre(L), d_gamma(L, 0.0);
            for (std::size_t i = 0; i < L; ++i) d_out_pre[i] = se.out_pre[i] > 0.0 ? d_alpha[i] : 0.0;
            for (std::size_t i = 0; i < L; ++i)
                for (std::size_t j = 0; j < L; ++j) {
                    lg.se_w2(i, j) += d_out_pre[i] * se.hidden[j];
                    d_hid[j] += lp.se_w2(i, j) * d_out_pre[i];
                }
            for (std::size_t i = 0; i < L; ++i) d_hid_pre[i] = se.hidden_pre[i] > 0.0 ? d_hid[i] : 0.0;
            for (std::size_t i = 0; i < L; ++i)
                for (std::size_t j = 0; j < L; ++j) {
                    lg.se_w1(i, j) += d_hid_pre[i] * se.gamma[j];
                    d_gamma[j] += lp.se_w1(i, j) * d_hid_pre[i];
                }
            for (std::size_t l = 0; l < L; ++l) {
                const double share = d_gamma[l] / static_cast<double>(d_ch[l].size());
                for (double& v : d_ch[l].values()) v += share;
            }
        }

        Matrix d_input_shared;
        std::vector<Matrix> next_extra(L);
        for (std::size_t l = 0; l < L; ++l) {
            const auto& ct = lt.channels[l];
            const auto& cp = lp.channels[l];
            auto& cg = lg.channels[l];
            const EgoAeIndex& idx = *indices[l];

            Matrix d_pre_out = d_ch[l];
            {
                auto g = d_pre_out.values();
                auto p = ct.pre_out.values();
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (p[i] <= 0.0) g[i] = 0.0;
            }
            Matrix d_hidden_c = linalg::affine_backward(ct.hidden, cp.w_b, d_pre_out, cg.w_b,
                                                        cg.b_b.row(0));
            {
                auto g = d_hidden_c.values();
                auto p = ct.pre_hidden.values();
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (p[i] <= 0.0) g[i] = 0.0;
            }
            const std::size_t H = d_hidden_c.cols(), m = idx.num_orbits();
            Matrix d_proj(d_hidden_c.rows(), H);
            for (NodeId v = 0; v < d_hidden_c.rows(); ++v) {
                auto g = d_hidden_c.row(v);
                for (std::size_t c = 0; c < H; ++c) cg.b_a(0, c) += g[c];
                const auto& sets = idx.ae_sets(v);
                for (std::size_t j = 0; j < m; ++j) {
                    auto s = ct.orbit_sums[j].row(v);
                    double db = 0.0;
                    for (std::size_t c = 0; c < H; ++c) db += g[c] * s[c];
                    cg.beta(0, j) += db;
                    const double b = cp.beta(0, j);
                    for (NodeId u : sets[j]) {
                        auto dp = d_proj.row(u);
                        for (std::size_t c = 0; c < H; ++c) dp[c] += b * g[c];
                    }
                }
            }
            const bool need_input = kk > 0;
            Matrix d_in = linalg::affine_backward(*ct.input, cp.w_a, d_proj, cg.w_a, {}, need_input);
            if (!need_input) continue;
            if (cfg.per_channel_history) {
                next_extra[l] = std::move(d_in);
            } else if (d_input_shared.empty()) {
                d_input_shared = std::move(d_in);
            } else {
                auto dst = d_input_shared.values();
                auto src = d_in.values();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
        }
        extra = std::move(next_extra);
        d_out = std::move(d_input_shared);
    }

    // Penalty gradient; frozen tensors get none.
    auto ptensors = P.tensors();
    auto gtensors = G.tensors();
    for (std::size_t i = 0; i < ptensors.size(); ++i) {
        const auto kind = ptensors[i].kind;
        if (!model.trainable(kind)) {
            gtensors[i].value->fill(0.0);
        } else if (model.decayed(kind)) {
            auto p = ptensors[i].value->values();
            auto g = gtensors[i].value->values();
            for (std::size_t e = 0; e < p.size(); ++e) g[e] += 2.0 * cfg.weight_decay * p[e];
        }
    }
    return res;
}

// Loss only (used by finite-difference checks).
inline double loss_value(const GrapeModel& model, const IndexList& indices, const Matrix& x,
                         const LabelVector& labels, std::span<const NodeId> nodes,
                         std::uint64_t dropout_seed, bool training) {
    std::mt19937_64 rng(dropout_seed);
    auto tr = forward(model, indices, x, training ? &rng : nullptr);
    const double inv = 1.0 / static_cast<double>(nodes.size());
    double loss = 0.0;
    for (NodeId v : nodes) {
        auto z = tr.logits.row(v);
        double mx = *std::max_element(z.begin(), z.end());
        double se = 0.0;
        for (double t : z) se += std::exp(t - mx);
        loss += (mx + std::log(se) - z[static_cast<std::size_t>(labels.labels[v])]) * inv;
    }
    return loss + model.l2_penalty();
}

inline double accuracy(const Matrix& logits, const LabelVector& labels, std::span<const NodeId> nodes) {
    if (nodes.empty()) return 0.0;
    std::size_t hit = 0;
    for (NodeId v : nodes) {
        auto z = logits.row(v);
        auto pred = std::max_element(z.begin(), z.end()) - z.begin();
        hit += pred == labels.labels[v] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

// ---------------------------------------------------------------------------
// Optimizer and training

class Adam {
public:
    Adam(const ParameterSet& like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(like.zeros_like()), v_(like.zeros_like()), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(ParameterSet& params, ParameterSet& grads, double lr) {
        ++t_;
        auto p = params.tensors();
        auto g = grads.tensors();
        auto m = m_.tensors();
        auto v = v_.tensors();
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto pv = p[i].value->values();
            auto gv = g[i].value->values();
            auto mv = m[i].value->values();
            auto vv = v[i].value->values();
            for (std::size_t e = 0; e < pv.size(); ++e) {
                mv[e] = b1_ * mv[e] + (1.0 - b1_) * gv[e];
                vv[e] = b2_ * vv[e] + (1.0 - b2_) * gv[e] * gv[e];
                pv[e] -= lr * (mv[e] / c1) / (std::sqrt(vv[e] / c2) + eps_);
            }
        }
    }

private:
    ParameterSet m_, v_;
    double b1_, b2_, eps_;
    std::uint64_t t_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
};

struct TrainReport {
    std::vector<EpochLog> log;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    bool early_stopped = false;
    std::vector<std::vector<double>> alphas;  // per layer, at the best parameters
};

// Called after each epoch with (epoch, validation accuracy); tests use it
// to inject validation curves.
using ValidationHook = std::function<double(std::size_t epoch, double measured)>;

// Adam with step decay and validation early stopping; leaves the model at
// its best-validation parameters.
inline TrainReport train(GrapeModel& model, const IndexList& indices, const Matrix& x,
                         const LabelVector& labels, const Split& split,
                         const ValidationHook& hook = {}) {
    const auto& cfg = model.config();
    if (split.train.empty()) throw InputError("training split is empty");
    Adam opt(model.params());
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainReport rep;
    ParameterSet best = model.params();
    double best_val = -1.0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = cfg.learning_rate *
                          std::pow(cfg.lr_decay, static_cast<double>((epoch - 1) / cfg.lr_decay_every));
        auto tr = forward(model, indices, x, &dropout_rng);
        auto lr_res = loss_and_gradients(model, tr, indices, labels, split.train);
        if (!std::isfinite(lr_res.loss))
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               " (loss " + std::to_string(lr_res.loss) + ")");
        opt.step(model.params(), lr_res.grads, lr);

        auto eval = forward(model, indices, x);
        double val = accuracy(eval.logits, labels, split.val);
        if (hook) val = hook(epoch, val);
        rep.log.push_back({epoch, lr_res.loss, val, lr});
        rep.epochs_run = epoch;
        if (val > best_val) {
            best_val = val;
            rep.best_epoch = epoch;
            best = model.params();
        } else if (epoch - rep.best_epoch >= cfg.patience) {
            rep.early_stopped = true;
            break;
        }
    }
    model.params() = best;
    auto eval = forward(model, indices, x);
    rep.best_val_acc = best_val;
    rep.train_acc = accuracy(eval.logits, labels, split.train);
    rep.test_acc = accuracy(eval.logits, labels, split.test);
    rep.alphas = eval.alphas();
    return rep;
}

// ---------------------------------------------------------------------------
// MPNN baseline

inline ModelConfig mpnn_config(ModelConfig cfg) {
    cfg.use_se = false;
    cfg.learn_orbit_weights = false;
    cfg.per_channel_history = false;
    return cfg;
}

// Sum-aggregation MPNN embeddings h^k(v) = MLP_k(h^{k-1}(v) + sum_{u in N(v)} h^{k-1}(u))
// for k = 1..layers, with randomly initialized MLPs.
inline std::vector<Matrix> mpnn_forward(const Graph& g, const Matrix& x, std::size_t layers,
                                        std::uint64_t seed = 0, std::size_t hidden = 16) {
    ModelConfig cfg;
    cfg.layers = layers;
    cfg.hidden = hidden;
    cfg.seed = seed;
    cfg = mpnn_config(cfg);
    MatchOptions opt;
    opt.ignore_direction = true;
    auto idx = build_index(g, AnchoredTemplate(2, {{0, 1}}, false, "edge"), opt);
    GrapeModel model(cfg, {idx.num_orbits()}, x.cols(), 2);
    auto tr = forward(model, {&idx}, x);
    std::vector<Matrix> out;
    for (auto& l : tr.layers) out.push_back(l.output);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return nlohmann::json{{"rows", m.rows()},
                          {"cols", m.cols()},
                          {"values", std::vector<double>(m.values().begin(), m.values().end())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    auto vals = j.at("values").get<std::vector<double>>();
    if (vals.size() != m.size()) throw InputError("checkpoint tensor size mismatch");
    std::copy(vals.begin(), vals.end(), m.values().begin());
    return m;
}

inline nlohmann::json checkpoint_json(const GrapeModel& model,
                                      const std::vector<AnchoredTemplate>& templates) {
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& t : model.params().tensors())
        tensors[t.name] = matrix_to_json(*t.value);
    nlohmann::json tj = nlohmann::json::array();
    for (const auto& t : templates) {
        auto j = to_json(t);
        j["canonical_form"] = canonical_form(t).hex();
        tj.push_back(j);
    }
    return nlohmann::json{{"format", "grape-checkpoint-v1"},
                          {"config", to_json(model.config())},
                          {"in_dim", model.in_dim()},
                          {"num_classes", model.num_classes()},
                          {"orbit_counts", model.orbit_counts()},
                          {"templates", tj},
                          {"tensors", tensors}};
}

inline GrapeModel model_from_checkpoint(const nlohmann::json& j) {
    GrapeModel model(model_config_from_json(j.at("config")),
                     j.at("orbit_counts").get<std::vector<std::size_t>>(),
                     j.at("in_dim").get<std::size_t>(), j.at("num_classes").get<std::size_t>());
    const auto& tensors = j.at("tensors");
    for (auto& t : model.params().tensors()) {
        Matrix m = matrix_from_json(tensors.at(t.name));
        if (m.rows() != t.value->rows() || m.cols() != t.value->cols())
            throw InputError("checkpoint tensor " + t.name + " has the wrong shape");
        *t.value = std::move(m);
    }
    return model;
}

}  // namespace grape
