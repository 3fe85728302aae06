#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "flowinv/dataset.hpp"
#include "flowinv/field.hpp"
#include "flowinv/parallel.hpp"
#include "flowinv/rng.hpp"
#include "flowinv/tensor.hpp"

namespace flowinv {

// MLP velocity field: flatten(z) ++ sinusoidal time embedding ++ condition
// embedding -> hidden tanh layers -> velocity of the input shape, plus a
// time-gated diagonal skip (a(t) + g_i) * z_i on the output. The skip is
// required for correctness, not speed: the marginal velocity carries a
// full-rank linear-in-z component (at t = 1 it is z - E[Z0]) that a
// hidden-width bottleneck cannot represent, and without it sampling never
// contracts the noise distribution onto the data range. The condition table
// carries one extra row for the NULL (unconditional) token.
struct NeuralFieldArch {
    int channels = kShapesChannels;
    int height = kShapesHeight;
    int width = kShapesWidth;
    int time_dim = 16;  // even; frequency ladder pi * 2^k
    int cond_dim = 16;
    std::vector<int> hidden = {256, 256, 256};
    int vocab = kShapesVocab;

    int data_dim() const { return channels * height * width; }
    int input_dim() const { return data_dim() + time_dim + cond_dim; }

    void validate() const {
        if (channels < 1 || height < 1 || width < 1) throw std::invalid_argument("arch: bad latent shape");
        if (time_dim < 2 || time_dim % 2 != 0) throw std::invalid_argument("arch: time_dim must be even >= 2");
        if (cond_dim < 1 || vocab < 1) throw std::invalid_argument("arch: bad embedding dims");
        if (hidden.empty()) throw std::invalid_argument("arch: need at least one hidden layer");
        for (int h : hidden)
            if (h < 1) throw std::invalid_argument("arch: hidden widths must be >= 1");
    }

    bool operator==(const NeuralFieldArch& o) const {
        return channels == o.channels && height == o.height && width == o.width && time_dim == o.time_dim &&
               cond_dim == o.cond_dim && hidden == o.hidden && vocab == o.vocab;
    }
};

namespace detail {

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
};

// Y = X * W^T + b, parallel over batch rows; each output element is one
// sequential dot product, so the result is thread-count independent.
inline void linear_forward(const Mat& x, const double* w, const double* b, int out_dim, Mat& y) {
    y = Mat(x.rows, out_dim);
    parallel_for(static_cast<std::size_t>(x.rows), [&](std::size_t bi) {
        const double* xr = x.row(static_cast<int>(bi));
        double* yr = y.row(static_cast<int>(bi));
        for (int o = 0; o < out_dim; ++o) {
            const double* wr = w + static_cast<std::size_t>(o) * x.cols;
            double acc = b[o];
            for (int i = 0; i < x.cols; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    });
}

// dW[o,:] = sum_b delta[b,o] * X[b,:] and db[o] = sum_b delta[b,o], parallel
// over output rows with the batch accumulated in fixed order.
inline void linear_grad_params(const Mat& delta, const Mat& x, double* dw, double* db) {
    parallel_for(static_cast<std::size_t>(delta.cols), [&](std::size_t o) {
        double* dwr = dw + o * static_cast<std::size_t>(x.cols);
        double acc_b = 0.0;
        for (int bi = 0; bi < delta.rows; ++bi) {
            double d = delta.row(bi)[o];
            acc_b += d;
            const double* xr = x.row(bi);
            for (int i = 0; i < x.cols; ++i) dwr[i] += d * xr[i];
        }
        db[o] = acc_b;
    });
}

// dX[b,:] = sum_o delta[b,o] * W[o,:], parallel over batch rows.
inline void linear_grad_input(const Mat& delta, const double* w, int in_dim, Mat& dx) {
    dx = Mat(delta.rows, in_dim);
    parallel_for(static_cast<std::size_t>(delta.rows), [&](std::size_t bi) {
        double* dxr = dx.row(static_cast<int>(bi));
        const double* dr = delta.row(static_cast<int>(bi));
        for (int o = 0; o < delta.cols; ++o) {
            double d = dr[o];
            const double* wr = w + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) dxr[i] += d * wr[i];
        }
    });
}

}  // namespace detail

class NeuralField : public VelocityField {
public:
    explicit NeuralField(NeuralFieldArch arch) : arch_(std::move(arch)) {
        arch_.validate();
        dims_.push_back(arch_.input_dim());
        for (int h : arch_.hidden) dims_.push_back(h);
        dims_.push_back(arch_.data_dim());

        cond_offset_ = 0;
        std::size_t off = static_cast<std::size_t>(arch_.vocab + 1) * arch_.cond_dim;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            w_offsets_.push_back(off);
            off += static_cast<std::size_t>(dims_[l + 1]) * dims_[l];
            b_offsets_.push_back(off);
            off += static_cast<std::size_t>(dims_[l + 1]);
        }
        skip_gain_offset_ = off;
        off += static_cast<std::size_t>(arch_.data_dim());  // per-pixel gain g
        skip_time_offset_ = off;
        off += static_cast<std::size_t>(arch_.time_dim) + 1;  // a(t) head: weights + bias
        params_.assign(off, 0.0);
    }

    const NeuralFieldArch& arch() const { return arch_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    int num_layers() const { return static_cast<int>(dims_.size()) - 1; }

    void init_params(Rng& rng) {
        double* table = params_.data() + cond_offset_;
        for (int i = 0; i < (arch_.vocab + 1) * arch_.cond_dim; ++i) table[i] = 0.5 * rng.next_normal();
        for (int l = 0; l < num_layers(); ++l) {
            double scale = 1.0 / std::sqrt(static_cast<double>(dims_[static_cast<std::size_t>(l)]));
            double* w = params_.data() + w_offsets_[static_cast<std::size_t>(l)];
            std::size_t count = static_cast<std::size_t>(dims_[static_cast<std::size_t>(l) + 1]) *
                                dims_[static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < count; ++i) w[i] = scale * rng.next_normal();
            // biases stay zero
        }
    }

    void time_embedding(double t, double* out) const {
        double omega = 3.14159265358979323846;
        for (int k = 0; k < arch_.time_dim / 2; ++k) {
            out[2 * k] = std::sin(omega * t);
            out[2 * k + 1] = std::cos(omega * t);
            omega *= 2.0;
        }
    }

    int cond_row(const Condition& c) const {
        if (c.is_null()) return arch_.vocab;
        if (*c.token < 0 || *c.token >= arch_.vocab)
            throw std::invalid_argument("NeuralField: condition token out of vocabulary");
        return *c.token;
    }

    // Fill one input row: [flatten(z); time_embed(t); cond_table[row]].
    void build_input(const Latent& z, double t, const Condition& c, double* x) const {
        if (z.c != arch_.channels || z.h != arch_.height || z.w != arch_.width)
            throw std::invalid_argument("NeuralField: latent shape does not match architecture");
        int d = arch_.data_dim();
        for (int i = 0; i < d; ++i) x[i] = z.v[static_cast<std::size_t>(i)];
        time_embedding(t, x + d);
        const double* row = params_.data() + cond_offset_ +
                            static_cast<std::size_t>(cond_row(c)) * arch_.cond_dim;
        for (int i = 0; i < arch_.cond_dim; ++i) x[d + arch_.time_dim + i] = row[i];
    }

    const double* layer_w(int l) const { return params_.data() + w_offsets_[static_cast<std::size_t>(l)]; }
    const double* layer_b(int l) const { return params_.data() + b_offsets_[static_cast<std::size_t>(l)]; }
    std::size_t w_offset(int l) const { return w_offsets_[static_cast<std::size_t>(l)]; }
    std::size_t b_offset(int l) const { return b_offsets_[static_cast<std::size_t>(l)]; }
    std::size_t cond_offset() const { return cond_offset_; }
    std::size_t skip_gain_offset() const { return skip_gain_offset_; }
    std::size_t skip_time_offset() const { return skip_time_offset_; }
    int dim(int l) const { return dims_[static_cast<std::size_t>(l)]; }

    // a(t) = w . time_embedding(t) + b, the scalar gate of the output skip
    double skip_gate(const double* time_emb) const {
        const double* w = params_.data() + skip_time_offset_;
        double acc = w[arch_.time_dim];
        for (int k = 0; k < arch_.time_dim; ++k) acc += w[k] * time_emb[k];
        return acc;
    }

private:
    Latent do_eval(const Latent& z, double t, const Condition& c) const override {
        std::vector<double> input(static_cast<std::size_t>(arch_.input_dim()));
        build_input(z, t, c, input.data());
        std::vector<double> cur = input, next;
        for (int l = 0; l < num_layers(); ++l) {
            int in = dims_[static_cast<std::size_t>(l)], out = dims_[static_cast<std::size_t>(l) + 1];
            next.assign(static_cast<std::size_t>(out), 0.0);
            const double* w = layer_w(l);
            const double* b = layer_b(l);
            for (int o = 0; o < out; ++o) {
                const double* wr = w + static_cast<std::size_t>(o) * in;
                double acc = b[o];
                for (int i = 0; i < in; ++i) acc += cur[static_cast<std::size_t>(i)] * wr[i];
                next[static_cast<std::size_t>(o)] = l + 1 < num_layers() ? std::tanh(acc) : acc;
            }
            cur.swap(next);
        }
        double gate = skip_gate(input.data() + arch_.data_dim());
        const double* g = params_.data() + skip_gain_offset_;
        for (int i = 0; i < arch_.data_dim(); ++i)
            cur[static_cast<std::size_t>(i)] += (gate + g[i]) * input[static_cast<std::size_t>(i)];
        Latent out(z.c, z.h, z.w);
        out.v.assign(cur.begin(), cur.end());
        return out;
    }

    NeuralFieldArch arch_;
    std::vector<int> dims_;
    std::vector<double> params_;
    std::size_t cond_offset_ = 0;
    std::size_t skip_gain_offset_ = 0, skip_time_offset_ = 0;
    std::vector<std::size_t> w_offsets_, b_offsets_;
};

// --- flow-matching objective --------------------------------------------------

struct TrainItem {
    Latent z0;
    Condition c;
};

inline std::vector<TrainItem> train_items(const std::vector<ShapesSample>& samples) {
    std::vector<TrainItem> items;
    items.reserve(samples.size());
    for (const auto& s : samples) items.push_back({s.image, Condition::of(s.token)});
    return items;
}

inline std::vector<TrainItem> train_items(const std::vector<Toy2dSample>& samples) {
    std::vector<TrainItem> items;
    items.reserve(samples.size());
    for (const auto& s : samples) items.push_back({s.z0, Condition::of(s.token)});
    return items;
}

// One stochastic realization of the objective: per item, Z1 ~ N(0,I) and
// t ~ U[0,1], interpolant z_t = t*Z1 + (1-t)*Z0, regression target Z1 - Z0.
// Condition dropout replaces the token with NULL.
struct FlowBatch {
    std::vector<Latent> z_t;
    std::vector<double> t;
    std::vector<Condition> cond;
    std::vector<Latent> target;

    int size() const { return static_cast<int>(z_t.size()); }
};

inline FlowBatch make_flow_batch(const std::vector<TrainItem>& items, Rng& rng, double cond_dropout = 0.0) {
    if (items.empty()) throw std::invalid_argument("make_flow_batch: empty batch");
    FlowBatch fb;
    for (const auto& item : items) {
        const Latent& z0 = item.z0;
        Latent z1 = rng.normal_latent(z0.c, z0.h, z0.w);
        double t = rng.next_double();
        Condition c = item.c;
        if (cond_dropout > 0.0 && rng.next_double() < cond_dropout) c = Condition::null();
        fb.z_t.push_back(affine(t, z1, 1.0 - t, z0));
        fb.t.push_back(t);
        fb.cond.push_back(c);
        fb.target.push_back(z1 - z0);
    }
    return fb;
}

// mean_b || target_b - v(z_t_b, t_b | c_b) ||^2 for any evaluatable map;
// the norm is the sum of squares over elements.
template <class EvalFn>
double flow_loss_with(EvalFn&& fn, const FlowBatch& batch) {
    double acc = 0.0;
    for (int b = 0; b < batch.size(); ++b) {
        Latent pred = fn(batch.z_t[static_cast<std::size_t>(b)], batch.t[static_cast<std::size_t>(b)],
                         batch.cond[static_cast<std::size_t>(b)]);
        Latent diff = batch.target[static_cast<std::size_t>(b)] - pred;
        for (double x : diff.v) acc += x * x;
    }
    return acc / batch.size();
}

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grads;  // same flat layout as NeuralField::params()
};

// Reverse-mode gradients of the flow-matching loss through the fixed MLP.
// Batch items are assembled in order and all accumulations run in the
// reference order, so the result is bit-identical for any thread count.
inline LossGrad loss_and_grad(const NeuralField& field, const FlowBatch& batch) {
    using detail::Mat;
    const auto& arch = field.arch();
    int bsz = batch.size();
    int layers = field.num_layers();

    std::vector<Mat> h(static_cast<std::size_t>(layers) + 1);
    h[0] = Mat(bsz, arch.input_dim());
    for (int b = 0; b < bsz; ++b)
        field.build_input(batch.z_t[static_cast<std::size_t>(b)], batch.t[static_cast<std::size_t>(b)],
                          batch.cond[static_cast<std::size_t>(b)], h[0].row(b));

    for (int l = 0; l < layers; ++l) {
        detail::linear_forward(h[static_cast<std::size_t>(l)], field.layer_w(l), field.layer_b(l),
                               field.dim(l + 1), h[static_cast<std::size_t>(l) + 1]);
        if (l + 1 < layers) {
            Mat& a = h[static_cast<std::size_t>(l) + 1];
            parallel_for(a.v.size(), [&](std::size_t i) { a.v[i] = std::tanh(a.v[i]); });
        }
    }

    // time-gated diagonal skip on the output
    const double* g = field.params().data() + field.skip_gain_offset();
    std::vector<double> gates(static_cast<std::size_t>(bsz));
    {
        Mat& out = h[static_cast<std::size_t>(layers)];
        for (int b = 0; b < bsz; ++b) {
            const double* xin = h[0].row(b);
            gates[static_cast<std::size_t>(b)] = field.skip_gate(xin + arch.data_dim());
            double* orow = out.row(b);
            for (int i = 0; i < arch.data_dim(); ++i)
                orow[i] += (gates[static_cast<std::size_t>(b)] + g[i]) * xin[i];
        }
    }

    LossGrad lg;
    lg.grads.assign(field.params().size(), 0.0);

    Mat delta(bsz, arch.data_dim());
    double loss = 0.0;
    const Mat& out = h[static_cast<std::size_t>(layers)];
    for (int b = 0; b < bsz; ++b) {
        const Latent& tgt = batch.target[static_cast<std::size_t>(b)];
        const double* orow = out.row(b);
        double* drow = delta.row(b);
        for (int i = 0; i < arch.data_dim(); ++i) {
            double diff = orow[i] - tgt.v[static_cast<std::size_t>(i)];
            loss += diff * diff;
            drow[i] = 2.0 * diff / bsz;
        }
    }
    lg.loss = loss / bsz;

    // skip gradients: per-pixel gain, gate weights, gate bias
    {
        double* d_gain = lg.grads.data() + field.skip_gain_offset();
        double* d_gate = lg.grads.data() + field.skip_time_offset();
        for (int b = 0; b < bsz; ++b) {
            const double* xin = h[0].row(b);
            const double* drow = delta.row(b);
            double dot_dz = 0.0;
            for (int i = 0; i < arch.data_dim(); ++i) {
                d_gain[i] += drow[i] * xin[i];
                dot_dz += drow[i] * xin[i];
            }
            const double* emb = xin + arch.data_dim();
            for (int k = 0; k < arch.time_dim; ++k) d_gate[k] += dot_dz * emb[k];
            d_gate[arch.time_dim] += dot_dz;
        }
    }

    for (int l = layers - 1; l >= 0; --l) {
        detail::linear_grad_params(delta, h[static_cast<std::size_t>(l)],
                                   lg.grads.data() + field.w_offset(l), lg.grads.data() + field.b_offset(l));
        Mat dprev;
        detail::linear_grad_input(delta, field.layer_w(l), field.dim(l), dprev);
        if (l > 0) {
            const Mat& act = h[static_cast<std::size_t>(l)];
            parallel_for(dprev.v.size(), [&](std::size_t i) {
                dprev.v[i] *= 1.0 - act.v[i] * act.v[i];
            });
            delta = std::move(dprev);
        } else {
            // condition-embedding gradients from the input tail
            int base = arch.data_dim() + arch.time_dim;
            for (int b = 0; b < bsz; ++b) {
                int row = field.cond_row(batch.cond[static_cast<std::size_t>(b)]);
                double* dst = lg.grads.data() + field.cond_offset() +
                              static_cast<std::size_t>(row) * arch.cond_dim;
                const double* src = dprev.row(b) + base;
                for (int i = 0; i < arch.cond_dim; ++i) dst[i] += src[i];
            }
        }
    }
    return lg;
}

// Spec-facing wrapper: draw the stochastic batch, then differentiate.
inline LossGrad fm_loss(const NeuralField& field, const std::vector<TrainItem>& batch, Rng& rng,
                        double cond_dropout = 0.0) {
    return loss_and_grad(field, make_flow_batch(batch, rng, cond_dropout));
}

// --- training -----------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 32;
    int total_steps = 3000;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 7;
    double cond_dropout = 0.1;
    NeuralFieldArch arch;

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
        if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
            throw std::invalid_argument("TrainConfig: betas must be in (0,1)");
        if (!(eps > 0.0)) throw std::invalid_argument("TrainConfig: eps must be > 0");
        if (cond_dropout < 0.0 || cond_dropout >= 1.0)
            throw std::invalid_argument("TrainConfig: cond_dropout must be in [0,1)");
        arch.validate();
    }
};

struct TrainResult {
    NeuralField field;
    std::vector<double> losses;
    std::optional<int> divergence_step;  // step index of the first NaN loss
};

// Adam on the flow-matching objective. Deterministic given (seed, config):
// init, batch selection, and noise draws all come from one seeded stream.
inline TrainResult train(const std::vector<TrainItem>& dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

    Rng rng(config.seed);
    NeuralField field(config.arch);
    field.init_params(rng);

    std::vector<double> m(field.params().size(), 0.0), u(field.params().size(), 0.0);
    TrainResult result{std::move(field), {}, std::nullopt};
    result.losses.reserve(static_cast<std::size_t>(config.total_steps));

    std::vector<TrainItem> batch_items(static_cast<std::size_t>(config.batch_size));
    for (int step = 1; step <= config.total_steps; ++step) {
        for (auto& item : batch_items)
            item = dataset[static_cast<std::size_t>(rng.next_below(static_cast<int>(dataset.size())))];
        FlowBatch fb = make_flow_batch(batch_items, rng, config.cond_dropout);
        LossGrad lg = loss_and_grad(result.field, fb);
        if (!std::isfinite(lg.loss)) {
            result.divergence_step = step;
            break;
        }
        result.losses.push_back(lg.loss);

        double bc1 = 1.0 - std::pow(config.beta1, step);
        double bc2 = 1.0 - std::pow(config.beta2, step);
        std::vector<double>& p = result.field.params();
        parallel_for(p.size(), [&](std::size_t i) {
            double g = lg.grads[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            u[i] = config.beta2 * u[i] + (1.0 - config.beta2) * g * g;
            p[i] -= config.lr * (m[i] / bc1) / (std::sqrt(u[i] / bc2) + config.eps);
        });
    }
    return result;
}

}  // namespace flowinv
