#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "powergrow/checkpoint.hpp"
#include "powergrow/normalize.hpp"
#include "powergrow/rng.hpp"
#include "powergrow/tensor.hpp"
#include "powergrow/util.hpp"

namespace powergrow {

constexpr std::size_t kLatentChannels = 32;  // d4
constexpr double kSquashEps = 1e-6;

// Named parameter collection with checkpoint round trips.
class ParamSet {
public:
    Tensor add_xavier(const std::string& name, std::size_t rows, std::size_t cols,
                      RandomSource& rng) {
        double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::vector<double> data(rows * cols);
        for (auto& v : data) v = limit * (2.0 * rng.uniform() - 1.0);
        return add_raw(name, Tensor::from_data(rows, cols, std::move(data), true));
    }

    Tensor add_constant(const std::string& name, std::size_t rows, std::size_t cols, double value) {
        return add_raw(name, Tensor::from_data(rows, cols, std::vector<double>(rows * cols, value), true));
    }

    Tensor add_raw(const std::string& name, Tensor t) {
        names_.push_back(name);
        tensors_.push_back(t);
        return t;
    }

    const std::vector<Tensor>& tensors() const { return tensors_; }
    const std::vector<std::string>& names() const { return names_; }

    void append(const ParamSet& other) {
        for (std::size_t i = 0; i < other.tensors_.size(); ++i) {
            names_.push_back(other.names_[i]);
            tensors_.push_back(other.tensors_[i]);
        }
    }

    std::vector<std::pair<std::string, Tensor>> named() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (std::size_t i = 0; i < tensors_.size(); ++i) out.emplace_back(names_[i], tensors_[i]);
        return out;
    }

    void save(const std::string& path) const { save_checkpoint(path, named()); }

    void load(const std::string& path) {
        auto loaded = load_checkpoint(path);
        for (std::size_t i = 0; i < tensors_.size(); ++i) {
            auto it = loaded.find(names_[i]);
            if (it == loaded.end())
                throw DataError("checkpoint " + path + " is missing tensor '" + names_[i] + "'");
            const auto& [dims, data] = it->second;
            if (dims.size() != 2 || dims[0] != tensors_[i].rows() || dims[1] != tensors_[i].cols())
                throw DataError("checkpoint " + path + ": shape mismatch for '" + names_[i] + "'");
            tensors_[i].data() = data;
        }
    }

private:
    std::vector<Tensor> tensors_;
    std::vector<std::string> names_;
};

// Sinusoidal embedding of the diffusion step fraction k/K.
inline Tensor timestep_embedding(double t_frac, std::size_t dim) {
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim / 2; ++i) {
        double freq = M_PI * std::pow(2.0, static_cast<double>(i));
        v[2 * i] = std::sin(t_frac * freq);
        v[2 * i + 1] = std::cos(t_frac * freq);
    }
    if (dim % 2 == 1) v[dim - 1] = t_frac;
    return Tensor::from_data(1, dim, std::move(v));
}

struct DenoiserConfig {
    std::size_t n_layers = 4;
    std::size_t hidden_dim = 64;
    std::size_t n_heads = 4;
    std::size_t node_in = 0;
    std::size_t edge_in = 0;
    std::size_t node_out = 0;   // 0 skips the node readout
    std::size_t edge_out = 0;   // 0 skips the edge readout
    std::size_t timestep_embed_dim = 32;

    void validate() const {
        if (n_layers < 1 || hidden_dim < 1 || n_heads < 1 || timestep_embed_dim < 1)
            throw UsageError("DenoiserConfig: widths must be >= 1");
        if (hidden_dim % n_heads != 0)
            throw UsageError("DenoiserConfig: hidden_dim must be divisible by n_heads");
        if (node_in < 1 || edge_in < 1)
            throw UsageError("DenoiserConfig: node_in and edge_in must be >= 1");
    }
};

// Graph attention stack over node channels with an edge-channel attention
// bias. Permutation equivariant: all transforms are shared across nodes and
// node pairs, and the timestep embedding is node-independent. Node readout is
// squashed into (eps, 1-eps); the edge readout is a symmetrized bilinear form
// with an edge-feature skip, also squashed.
class GraphDenoiser {
public:
    GraphDenoiser(DenoiserConfig cfg, RandomSource rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t h = cfg_.hidden_dim;
        w_in_ = params_.add_xavier("embed.w", cfg_.node_in, h, rng);
        b_in_ = params_.add_constant("embed.b", 1, h, 0.0);
        w_time_ = params_.add_xavier("embed.time", cfg_.timestep_embed_dim, h, rng);
        for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
            Layer layer;
            const std::string p = "layer" + std::to_string(l) + ".";
            layer.w_q = params_.add_xavier(p + "attn.q", h, h, rng);
            layer.w_k = params_.add_xavier(p + "attn.k", h, h, rng);
            layer.w_v = params_.add_xavier(p + "attn.v", h, h, rng);
            layer.w_o = params_.add_xavier(p + "attn.o", h, h, rng);
            layer.b_o = params_.add_constant(p + "attn.o_bias", 1, h, 0.0);
            layer.edge_bias = params_.add_xavier(p + "attn.edge_bias", cfg_.edge_in, cfg_.n_heads, rng);
            layer.ln1_g = params_.add_constant(p + "ln1.gain", 1, h, 1.0);
            layer.ln1_b = params_.add_constant(p + "ln1.bias", 1, h, 0.0);
            layer.w_ffn1 = params_.add_xavier(p + "ffn.w1", h, 2 * h, rng);
            layer.b_ffn1 = params_.add_constant(p + "ffn.b1", 1, 2 * h, 0.0);
            layer.w_ffn2 = params_.add_xavier(p + "ffn.w2", 2 * h, h, rng);
            layer.b_ffn2 = params_.add_constant(p + "ffn.b2", 1, h, 0.0);
            layer.ln2_g = params_.add_constant(p + "ln2.gain", 1, h, 1.0);
            layer.ln2_b = params_.add_constant(p + "ln2.bias", 1, h, 0.0);
            layers_.push_back(layer);
        }
        if (cfg_.node_out > 0) {
            w_node_ = params_.add_xavier("readout.node.w", h, cfg_.node_out, rng);
            b_node_ = params_.add_constant("readout.node.b", 1, cfg_.node_out, 0.0);
        }
        for (std::size_t c = 0; c < cfg_.edge_out; ++c) {
            const std::string p = "readout.edge" + std::to_string(c) + ".";
            edge_bilinear_.push_back(params_.add_xavier(p + "bilinear", h, h, rng));
            edge_skip_.push_back(params_.add_xavier(p + "skip", cfg_.edge_in, 1, rng));
            edge_bias_.push_back(params_.add_constant(p + "bias", 1, 1, 0.0));
        }
    }

    struct Output {
        Tensor nodes;  // N x node_out, entries in (eps, 1-eps); undefined when node_out = 0
        Tensor edges;  // N^2 x edge_out, per-channel symmetric; undefined when edge_out = 0
    };

    Output forward(const Tensor& node_feats, const Tensor& edge_feats, std::size_t n,
                   double t_frac) const {
        if (node_feats.rows() != n || node_feats.cols() != cfg_.node_in)
            throw UsageError("GraphDenoiser: node feature shape mismatch (" +
                             std::to_string(node_feats.rows()) + "x" +
                             std::to_string(node_feats.cols()) + ")");
        if (edge_feats.rows() != n * n || edge_feats.cols() != cfg_.edge_in)
            throw UsageError("GraphDenoiser: edge feature shape mismatch (" +
                             std::to_string(edge_feats.rows()) + "x" +
                             std::to_string(edge_feats.cols()) + ")");
        const std::size_t h = cfg_.hidden_dim;
        const std::size_t dh = h / cfg_.n_heads;
        const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

        Tensor time = matmul(timestep_embedding(t_frac, cfg_.timestep_embed_dim), w_time_);
        Tensor hid = relu(add(add(matmul(node_feats, w_in_), broadcast_rows(b_in_, n)),
                              broadcast_rows(time, n)));

        for (const Layer& layer : layers_) {
            Tensor q = matmul(hid, layer.w_q);
            Tensor k = matmul(hid, layer.w_k);
            Tensor v = matmul(hid, layer.w_v);
            Tensor bias_all = matmul(edge_feats, layer.edge_bias);  // N^2 x heads
            Tensor heads;
            for (std::size_t head = 0; head < cfg_.n_heads; ++head) {
                Tensor qh = slice_cols(q, head * dh, (head + 1) * dh);
                Tensor kh = slice_cols(k, head * dh, (head + 1) * dh);
                Tensor vh = slice_cols(v, head * dh, (head + 1) * dh);
                Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
                Tensor bias = reshape(slice_cols(bias_all, head, head + 1), n, n);
                Tensor attn = softmax_rows(add(scores, bias));
                Tensor oh = matmul(attn, vh);
                heads = head == 0 ? oh : concat_cols(heads, oh);
            }
            Tensor attn_out = add(matmul(heads, layer.w_o), broadcast_rows(layer.b_o, n));
            hid = layer_norm(add(hid, attn_out), layer.ln1_g, layer.ln1_b);
            Tensor ffn = add(matmul(relu(add(matmul(hid, layer.w_ffn1), broadcast_rows(layer.b_ffn1, n))),
                                    layer.w_ffn2),
                             broadcast_rows(layer.b_ffn2, n));
            hid = layer_norm(add(hid, ffn), layer.ln2_g, layer.ln2_b);
        }

        Output out;
        if (cfg_.node_out > 0) {
            out.nodes =
                squash_unit(add(matmul(hid, w_node_), broadcast_rows(b_node_, n)), kSquashEps);
        }
        for (std::size_t c = 0; c < cfg_.edge_out; ++c) {
            Tensor s = matmul(matmul(hid, edge_bilinear_[c]), transpose(hid));
            Tensor skip = reshape(matmul(edge_feats, edge_skip_[c]), n, n);
            Tensor pre = add_scalar_t(add(s, skip), edge_bias_[c]);
            Tensor sym = scale(add(pre, transpose(pre)), 0.5);
            Tensor channel = reshape(squash_unit(sym, kSquashEps), n * n, 1);
            out.edges = c == 0 ? channel : concat_cols(out.edges, channel);
        }
        return out;
    }

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const DenoiserConfig& config() const { return cfg_; }

private:
    struct Layer {
        Tensor w_q, w_k, w_v, w_o, b_o, edge_bias;
        Tensor ln1_g, ln1_b, w_ffn1, b_ffn1, w_ffn2, b_ffn2, ln2_g, ln2_b;
    };

    DenoiserConfig cfg_;
    ParamSet params_;
    Tensor w_in_, b_in_, w_time_;
    std::vector<Layer> layers_;
    Tensor w_node_, b_node_;
    std::vector<Tensor> edge_bilinear_, edge_skip_, edge_bias_;
};

namespace netsdetail {

// zeroes the diagonal of an n x n tensor via a constant mask
inline Tensor zero_diagonal(const Tensor& a, std::size_t n) {
    std::vector<double> mask(n * n, 1.0);
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 0.0;
    return mul(a, Tensor::from_data(n, n, std::move(mask)));
}

}  // namespace netsdetail

// f_theta: estimates the clean structure (adjacency + node channels) from the
// noisy pair; the adjacency estimate is symmetrized with a zero diagonal.
inline std::pair<Tensor, Tensor> denoise_structure(const GraphDenoiser& net, const Tensor& a_k,
                                                   const Tensor& x_k, std::size_t k, std::size_t K) {
    const std::size_t n = x_k.rows();
    if (a_k.rows() != n || a_k.cols() != n)
        throw UsageError("denoise_structure: adjacency shape mismatch");
    auto out = net.forward(x_k, reshape(a_k, n * n, 1), n, static_cast<double>(k) / static_cast<double>(K));
    Tensor a_hat = netsdetail::zero_diagonal(reshape(out.edges, n, n), n);
    return {a_hat, out.nodes};
}

// f_gamma: estimates clean edge channels conditioned on (estimated) clean
// structure; the noisy edge channels ride along as attention features.
inline Tensor denoise_edges(const GraphDenoiser& net, const Tensor& a0_hat, const Tensor& x0_hat,
                            const Tensor& e_k, std::size_t k, std::size_t K) {
    const std::size_t n = x0_hat.rows();
    Tensor edge_feats = concat_cols(reshape(a0_hat, n * n, 1), e_k);
    auto out = net.forward(x0_hat, edge_feats, n, static_cast<double>(k) / static_cast<double>(K));
    return out.edges;
}

// f_phi: estimates the clean load latents conditioned on structure and edges.
inline Tensor denoise_loads(const GraphDenoiser& net, const Tensor& a0_hat, const Tensor& x0_hat,
                            const Tensor& e0_hat, const Tensor& h_k, std::size_t k, std::size_t K) {
    const std::size_t n = x0_hat.rows();
    Tensor node_feats = concat_cols(x0_hat, h_k);
    Tensor edge_feats = concat_cols(reshape(a0_hat, n * n, 1), e0_hat);
    auto out = net.forward(node_feats, edge_feats, n, static_cast<double>(k) / static_cast<double>(K));
    return out.nodes;
}

struct AutoencoderConfig {
    std::size_t input_dim = kLoadChannels;
    std::size_t hidden_dim = 64;
    std::size_t latent_dim = kLatentChannels;
    std::size_t horizon = 0;

    void validate() const {
        if (input_dim < 1 || hidden_dim < 1 || latent_dim < 1 || horizon < 1)
            throw UsageError("AutoencoderConfig: all dimensions must be >= 1");
    }
};

// Gated recurrent autoencoder over the time axis, weights shared across
// buses. The encoder squashes its final hidden state into (eps, 1-eps) of
// width latent_dim so the latents are beta-diffusable; the decoder expands a
// latent row into an initial state and unrolls horizon steps.
class LstmAutoencoder {
public:
    LstmAutoencoder(AutoencoderConfig cfg, RandomSource rng) : cfg_(cfg) {
        cfg_.validate();
        const std::size_t h = cfg_.hidden_dim;
        const std::size_t d = cfg_.input_dim;
        const std::size_t z = cfg_.latent_dim;
        enc_w_x_ = enc_.add_xavier("enc.w_x", d, 4 * h, rng);
        enc_w_h_ = enc_.add_xavier("enc.w_h", h, 4 * h, rng);
        enc_b_ = enc_.add_constant("enc.b", 1, 4 * h, 0.0);
        // forget gate bias starts open
        for (std::size_t j = h; j < 2 * h; ++j) enc_b_.data()[j] = 1.0;
        enc_w_lat_ = enc_.add_xavier("enc.w_lat", h, z, rng);
        enc_b_lat_ = enc_.add_constant("enc.b_lat", 1, z, 0.0);

        dec_w_h0_ = dec_.add_xavier("dec.w_h0", z, h, rng);
        dec_b_h0_ = dec_.add_constant("dec.b_h0", 1, h, 0.0);
        dec_w_c0_ = dec_.add_xavier("dec.w_c0", z, h, rng);
        dec_b_c0_ = dec_.add_constant("dec.b_c0", 1, h, 0.0);
        dec_w_h_ = dec_.add_xavier("dec.w_h", h, 4 * h, rng);
        dec_b_ = dec_.add_constant("dec.b", 1, 4 * h, 0.0);
        for (std::size_t j = h; j < 2 * h; ++j) dec_b_.data()[j] = 1.0;
        dec_w_y_ = dec_.add_xavier("dec.w_y", h, d, rng);
        dec_b_y_ = dec_.add_constant("dec.b_y", 1, d, 0.0);
    }

    // d: N x (horizon * input_dim), normalized to (0,1). Returns N x latent_dim.
    Tensor encode(const Tensor& d) const {
        const std::size_t n = d.rows();
        if (d.cols() != cfg_.horizon * cfg_.input_dim)
            throw UsageError("encode: series length mismatch (expected horizon " +
                             std::to_string(cfg_.horizon) + ")");
        const std::size_t h = cfg_.hidden_dim;
        Tensor hid = Tensor::zeros(n, h);
        Tensor cell = Tensor::zeros(n, h);
        for (std::size_t t = 0; t < cfg_.horizon; ++t) {
            Tensor x_t = slice_cols(d, t * cfg_.input_dim, (t + 1) * cfg_.input_dim);
            Tensor gates = add(add(matmul(x_t, enc_w_x_), matmul(hid, enc_w_h_)),
                               broadcast_rows(enc_b_, n));
            step(gates, n, h, &hid, &cell);
        }
        return squash_unit(add(matmul(hid, enc_w_lat_), broadcast_rows(enc_b_lat_, n)), kSquashEps);
    }

    // latents: N x latent_dim in (0,1). Returns N x (horizon * input_dim) in (0,1).
    Tensor decode(const Tensor& latents) const {
        const std::size_t n = latents.rows();
        if (latents.cols() != cfg_.latent_dim) throw UsageError("decode: latent width mismatch");
        const std::size_t h = cfg_.hidden_dim;
        Tensor hid = tanh(add(matmul(latents, dec_w_h0_), broadcast_rows(dec_b_h0_, n)));
        Tensor cell = tanh(add(matmul(latents, dec_w_c0_), broadcast_rows(dec_b_c0_, n)));
        Tensor out;
        for (std::size_t t = 0; t < cfg_.horizon; ++t) {
            Tensor gates = add(matmul(hid, dec_w_h_), broadcast_rows(dec_b_, n));
            step(gates, n, h, &hid, &cell);
            Tensor y = sigmoid(add(matmul(hid, dec_w_y_), broadcast_rows(dec_b_y_, n)));
            out = t == 0 ? y : concat_cols(out, y);
        }
        return out;
    }

    Tensor reconstruction_loss(const Tensor& d) const {
        Tensor diff = sub(decode(encode(d)), d);
        return mean(mul(diff, diff));
    }

    ParamSet& encoder_params() { return enc_; }
    ParamSet& decoder_params() { return dec_; }
    const ParamSet& encoder_params() const { return enc_; }
    const ParamSet& decoder_params() const { return dec_; }
    const AutoencoderConfig& config() const { return cfg_; }

private:
    static void step(const Tensor& gates, std::size_t n, std::size_t h, Tensor* hid, Tensor* cell) {
        Tensor i_g = sigmoid(slice_cols(gates, 0, h));
        Tensor f_g = sigmoid(slice_cols(gates, h, 2 * h));
        Tensor g_g = tanh(slice_cols(gates, 2 * h, 3 * h));
        Tensor o_g = sigmoid(slice_cols(gates, 3 * h, 4 * h));
        *cell = add(mul(f_g, *cell), mul(i_g, g_g));
        *hid = mul(o_g, tanh(*cell));
        (void)n;
    }

    AutoencoderConfig cfg_;
    ParamSet enc_, dec_;
    Tensor enc_w_x_, enc_w_h_, enc_b_, enc_w_lat_, enc_b_lat_;
    Tensor dec_w_h0_, dec_b_h0_, dec_w_c0_, dec_b_c0_, dec_w_h_, dec_b_, dec_w_y_, dec_b_y_;
};

}  // namespace powergrow
