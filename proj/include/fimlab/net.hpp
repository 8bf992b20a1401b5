#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "fimlab/common.hpp"

namespace fimlab {

enum class Activation : std::uint32_t { relu = 0, identity = 1, abs = 2 };

// Activations cached by a forward pass, needed to backpropagate through it.
struct MlpCache {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> preacts;
};

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::identity: return z;
        case Activation::abs: return std::fabs(z);
    }
    return z;
}

inline double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::identity: return 1.0;
        case Activation::abs: return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
    }
    return 1.0;
}

// Dense parameterized map: affine layers with an elementwise activation on
// hidden layers and a separate (default identity) activation on the output.
// Parameters live in one flat vector (per layer: row-major weights, then
// biases); gradients accumulate into a buffer of the same shape.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<int> sizes, Activation hidden, Activation output = Activation::identity)
        : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
        if (sizes_.size() < 2) throw ConfigError("Mlp needs at least one layer");
        std::size_t n = 0;
        for (std::size_t l = 1; l < sizes_.size(); ++l) {
            weight_off_.push_back(n);
            n += static_cast<std::size_t>(sizes_[l]) * sizes_[l - 1];
            bias_off_.push_back(n);
            n += sizes_[l];
        }
        params_.assign(n, 0.0);
        grads_.assign(n, 0.0);
    }

    void init_params(Rng& rng) {
        for (std::size_t l = 1; l < sizes_.size(); ++l) {
            double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l - 1]));
            std::size_t w0 = weight_off_[l - 1];
            std::size_t b0 = bias_off_[l - 1];
            for (std::size_t i = w0; i < b0; ++i) params_[i] = rng.uniform(-bound, bound);
            for (int i = 0; i < sizes_[l]; ++i) params_[b0 + i] = rng.uniform(-bound, bound);
        }
    }

    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return sizes_; }
    Activation hidden_activation() const { return hidden_; }
    Activation output_activation() const { return output_; }
    std::size_t param_count() const { return params_.size(); }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& grads() { return grads_; }
    const std::vector<double>& grads() const { return grads_; }

    std::size_t weight_offset(std::size_t layer) const { return weight_off_.at(layer); }
    std::size_t bias_offset(std::size_t layer) const { return bias_off_.at(layer); }

    void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

    std::vector<double> forward(const std::vector<double>& input, MlpCache& cache) const {
        if (static_cast<int>(input.size()) != sizes_.front())
            throw InputError("Mlp forward: input size mismatch");
        cache.acts.assign(1, input);
        cache.preacts.clear();
        for (std::size_t l = 1; l < sizes_.size(); ++l) {
            const int out = sizes_[l];
            const int in = sizes_[l - 1];
            const double* w = params_.data() + weight_off_[l - 1];
            const double* b = params_.data() + bias_off_[l - 1];
            const std::vector<double>& a = cache.acts.back();
            std::vector<double> z(out);
            for (int r = 0; r < out; ++r) {
                double s = b[r];
                const double* wr = w + static_cast<std::size_t>(r) * in;
                for (int c = 0; c < in; ++c) s += wr[c] * a[c];
                z[r] = s;
            }
            Activation act = (l + 1 == sizes_.size()) ? output_ : hidden_;
            std::vector<double> az(out);
            for (int r = 0; r < out; ++r) az[r] = activate(act, z[r]);
            cache.preacts.push_back(std::move(z));
            cache.acts.push_back(std::move(az));
        }
        return cache.acts.back();
    }

    std::vector<double> forward(const std::vector<double>& input) {
        return forward(input, cache_);
    }

    std::vector<double> backward(const std::vector<double>& upstream, const MlpCache& cache) {
        if (cache.acts.size() != sizes_.size())
            throw StateError("Mlp backward without a cached forward pass");
        if (static_cast<int>(upstream.size()) != sizes_.back())
            throw InputError("Mlp backward: upstream size mismatch");

        std::vector<double> g = upstream;
        for (std::size_t l = sizes_.size() - 1; l >= 1; --l) {
            const int out = sizes_[l];
            const int in = sizes_[l - 1];
            Activation act = (l + 1 == sizes_.size()) ? output_ : hidden_;
            const std::vector<double>& z = cache.preacts[l - 1];
            const std::vector<double>& a_prev = cache.acts[l - 1];
            double* gw = grads_.data() + weight_off_[l - 1];
            double* gb = grads_.data() + bias_off_[l - 1];
            const double* w = params_.data() + weight_off_[l - 1];

            std::vector<double> dz(out);
            for (int r = 0; r < out; ++r) dz[r] = g[r] * activate_grad(act, z[r]);
            for (int r = 0; r < out; ++r) {
                double* gwr = gw + static_cast<std::size_t>(r) * in;
                const double dzr = dz[r];
                for (int c = 0; c < in; ++c) gwr[c] += dzr * a_prev[c];
                gb[r] += dzr;
            }
            std::vector<double> gprev(in, 0.0);
            for (int r = 0; r < out; ++r) {
                const double* wr = w + static_cast<std::size_t>(r) * in;
                const double dzr = dz[r];
                for (int c = 0; c < in; ++c) gprev[c] += wr[c] * dzr;
            }
            g = std::move(gprev);
        }
        return g;
    }

    // Accumulates parameter gradients for the last member-cached forward
    // pass and returns the loss gradient w.r.t. the input.
    std::vector<double> backward(const std::vector<double>& upstream) {
        return backward(upstream, cache_);
    }

    bool operator==(const Mlp& other) const {
        return sizes_ == other.sizes_ && hidden_ == other.hidden_ && output_ == other.output_ &&
               params_ == other.params_;
    }

private:
    std::vector<int> sizes_;
    Activation hidden_ = Activation::relu;
    Activation output_ = Activation::identity;
    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<std::size_t> weight_off_;
    std::vector<std::size_t> bias_off_;
    MlpCache cache_;
};

// Bias-corrected Adam. Step applies one update from the accumulated
// gradients and clears them; non-finite gradients are surfaced, not clamped.
class AdamOptimizer {
public:
    explicit AdamOptimizer(std::size_t n_params, double learning_rate = 5e-4)
        : lr_(learning_rate), m_(n_params, 0.0), v_(n_params, 0.0) {
        if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    }

    double learning_rate() const { return lr_; }
    std::int64_t step_count() const { return t_; }

    void step(std::vector<double>& params, std::vector<double>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw InputError("AdamOptimizer: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            if (!std::isfinite(g)) throw TrainingError("non-finite gradient in Adam step");
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
            params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
        std::fill(grads.begin(), grads.end(), 0.0);
    }

    void step(Mlp& f) { step(f.params(), f.grads()); }

private:
    double lr_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::int64_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

namespace detail {

inline void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    if (std::fwrite(b, 1, 4, f) != 4) throw IoError("checkpoint write failed");
}

inline std::uint32_t get_u32(std::FILE* f) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw IoError("checkpoint read failed");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::FILE* f, double x) {
    auto bits = std::bit_cast<std::uint64_t>(x);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    if (std::fwrite(b, 1, 8, f) != 8) throw IoError("checkpoint write failed");
}

inline double get_f64(std::FILE* f) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8) throw IoError("checkpoint read failed");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

// Checkpoint layout: "FIMN", version, layer-size list, activation ids,
// then the flat parameter vector as little-endian 64-bit floats.
inline void save_checkpoint(const Mlp& net, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    try {
        std::fputs("FIMN", f);
        detail::put_u32(f, 1);
        detail::put_u32(f, static_cast<std::uint32_t>(net.layer_sizes().size()));
        for (int s : net.layer_sizes()) detail::put_u32(f, static_cast<std::uint32_t>(s));
        detail::put_u32(f, static_cast<std::uint32_t>(net.hidden_activation()));
        detail::put_u32(f, static_cast<std::uint32_t>(net.output_activation()));
        for (double p : net.params()) detail::put_f64(f, p);
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
}

inline Mlp load_checkpoint(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open checkpoint: " + path);
    try {
        char magic[4];
        if (std::fread(magic, 1, 4, f) != 4 || std::string(magic, 4) != "FIMN")
            throw IoError("bad checkpoint magic: " + path);
        if (detail::get_u32(f) != 1) throw IoError("unsupported checkpoint version: " + path);
        std::uint32_t n_sizes = detail::get_u32(f);
        if (n_sizes < 2 || n_sizes > 64) throw IoError("corrupt checkpoint header: " + path);
        std::vector<int> sizes(n_sizes);
        for (auto& s : sizes) s = static_cast<int>(detail::get_u32(f));
        auto hidden = static_cast<Activation>(detail::get_u32(f));
        auto output = static_cast<Activation>(detail::get_u32(f));
        Mlp net(sizes, hidden, output);
        for (double& p : net.params()) p = detail::get_f64(f);
        std::fclose(f);
        return net;
    } catch (...) {
        std::fclose(f);
        throw;
    }
}

}  // namespace fimlab
