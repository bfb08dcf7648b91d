#pragma once

#include "flowguide/common.hpp"
#include "flowguide/rng.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace flowguide {

struct MicroMlpSpec {
    int dim = 2;       // state dimension; network input is dim+1 (state ++ time)
    int hidden1 = 64;
    int hidden2 = 64;
    std::uint64_t weight_seed = 0;

    void validate() const {
        if (dim < 1 || dim > 64) throw ConfigError("mlp: dim must lie in [1, 64]");
        if (hidden1 < 1 || hidden2 < 1) throw ConfigError("mlp: hidden widths must be positive");
    }
};

// Two-hidden-layer tanh MLP mapping (t, x) -> R^d, with hand-written reverse and
// forward mode in both the input and the parameters. Fixed architecture keeps the
// derivative code short; there is no autodiff graph anywhere in this project.
class MicroMlp {
public:
    explicit MicroMlp(const MicroMlpSpec& spec) : spec_(spec) {
        spec_.validate();
        Rng rng(spec_.weight_seed);
        const int in = spec_.dim + 1;
        W1_ = init(rng, spec_.hidden1, in);
        b1_ = Vec::Zero(spec_.hidden1);
        W2_ = init(rng, spec_.hidden2, spec_.hidden1);
        b2_ = Vec::Zero(spec_.hidden2);
        W3_ = init(rng, spec_.dim, spec_.hidden2);
        b3_ = Vec::Zero(spec_.dim);
    }

    const MicroMlpSpec& spec() const { return spec_; }
    int dim() const { return spec_.dim; }

    struct Activations {
        Vec input;  // [x; t]
        Vec a1, a2; // post-tanh hidden states
        Vec out;
    };

    Activations forward_trace(double t, const Vec& x) const {
        Activations act;
        act.input.resize(spec_.dim + 1);
        act.input.head(spec_.dim) = x;
        act.input[spec_.dim] = t;
        act.a1 = (W1_ * act.input + b1_).array().tanh();
        act.a2 = (W2_ * act.a1 + b2_).array().tanh();
        act.out = W3_ * act.a2 + b3_;
        return act;
    }

    Vec forward(double t, const Vec& x) const { return forward_trace(t, x).out; }

    // wᵀ ∂out/∂x  (time input held fixed).
    Vec input_vjp(double t, const Vec& x, const Vec& w) const {
        const Activations act = forward_trace(t, x);
        const Vec dz2 = (W3_.transpose() * w).cwiseProduct(one_minus_sq(act.a2));
        const Vec dz1 = (W2_.transpose() * dz2).cwiseProduct(one_minus_sq(act.a1));
        return (W1_.transpose() * dz1).head(spec_.dim);
    }

    // ∂out/∂x · v.
    Vec input_jvp(double t, const Vec& x, const Vec& v) const {
        const Activations act = forward_trace(t, x);
        Vec din = Vec::Zero(spec_.dim + 1);
        din.head(spec_.dim) = v;
        const Vec da1 = (W1_ * din).cwiseProduct(one_minus_sq(act.a1));
        const Vec da2 = (W2_ * da1).cwiseProduct(one_minus_sq(act.a2));
        return W3_ * da2;
    }

    struct ParamGrads {
        Mat W1, W2, W3;
        Vec b1, b2, b3;
    };

    // Accumulate dL/dparams for dL/dout = w at the given activations.
    void param_backward(const Activations& act, const Vec& w, ParamGrads& g) const {
        const Vec dz2 = (W3_.transpose() * w).cwiseProduct(one_minus_sq(act.a2));
        const Vec dz1 = (W2_.transpose() * dz2).cwiseProduct(one_minus_sq(act.a1));
        g.W3 += w * act.a2.transpose();
        g.b3 += w;
        g.W2 += dz2 * act.a1.transpose();
        g.b2 += dz2;
        g.W1 += dz1 * act.input.transpose();
        g.b1 += dz1;
    }

    ParamGrads zero_grads() const {
        return {Mat::Zero(W1_.rows(), W1_.cols()), Mat::Zero(W2_.rows(), W2_.cols()),
                Mat::Zero(W3_.rows(), W3_.cols()), Vec::Zero(b1_.size()),
                Vec::Zero(b2_.size()), Vec::Zero(b3_.size())};
    }

    void apply_update(const ParamGrads& g, double lr) {
        W1_ -= lr * g.W1;
        b1_ -= lr * g.b1;
        W2_ -= lr * g.W2;
        b2_ -= lr * g.b2;
        W3_ -= lr * g.W3;
        b3_ -= lr * g.b3;
    }

    bool weights_equal(const MicroMlp& other) const {
        return W1_ == other.W1_ && b1_ == other.b1_ && W2_ == other.W2_ &&
               b2_ == other.b2_ && W3_ == other.W3_ && b3_ == other.b3_;
    }

    // --- serialization -----------------------------------------------------
    // Layout: magic "FLOWMLP1", u32 version, u32 dim, u32 hidden1, u32 hidden2,
    // then W1,b1,W2,b2,W3,b3 as row-major little-endian f64 blocks.

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("mlp save: cannot open " + path);
        f.write(kMagic, 8);
        write_u32(f, 1);
        write_u32(f, static_cast<std::uint32_t>(spec_.dim));
        write_u32(f, static_cast<std::uint32_t>(spec_.hidden1));
        write_u32(f, static_cast<std::uint32_t>(spec_.hidden2));
        write_mat(f, W1_);
        write_vec(f, b1_);
        write_mat(f, W2_);
        write_vec(f, b2_);
        write_mat(f, W3_);
        write_vec(f, b3_);
        if (!f) throw ConfigError("mlp save: write failed for " + path);
    }

    static MicroMlp load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ConfigError("mlp load: cannot open " + path);
        char magic[8];
        f.read(magic, 8);
        if (!f || std::memcmp(magic, kMagic, 8) != 0)
            throw ConfigError("mlp load: bad magic in " + path);
        if (read_u32(f) != 1) throw ConfigError("mlp load: unsupported version");
        MicroMlpSpec spec;
        spec.dim = static_cast<int>(read_u32(f));
        spec.hidden1 = static_cast<int>(read_u32(f));
        spec.hidden2 = static_cast<int>(read_u32(f));
        MicroMlp mlp(spec);
        read_mat(f, mlp.W1_);
        read_vec(f, mlp.b1_);
        read_mat(f, mlp.W2_);
        read_vec(f, mlp.b2_);
        read_mat(f, mlp.W3_);
        read_vec(f, mlp.b3_);
        if (!f) throw ConfigError("mlp load: truncated file " + path);
        return mlp;
    }

private:
    static constexpr const char* kMagic = "FLOWMLP1";

    static Mat init(Rng& rng, int rows, int cols) {
        Mat m(rows, cols);
        const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
        return m;
    }

    static Vec one_minus_sq(const Vec& a) { return (1.0 - a.array().square()).matrix(); }

    static void write_u32(std::ofstream& f, std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        f.write(reinterpret_cast<char*>(b), 4);
    }

    static std::uint32_t read_u32(std::ifstream& f) {
        unsigned char b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    static void write_f64(std::ofstream& f, double x) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        f.write(reinterpret_cast<char*>(b), 8);
    }

    static double read_f64(std::ifstream& f) {
        unsigned char b[8];
        f.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        double x;
        std::memcpy(&x, &bits, 8);
        return x;
    }

    static void write_mat(std::ofstream& f, const Mat& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(f, m(i, j));
    }
    static void write_vec(std::ofstream& f, const Vec& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(f, v[i]);
    }
    static void read_mat(std::ifstream& f, Mat& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64(f);
    }
    static void read_vec(std::ifstream& f, Vec& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = read_f64(f);
    }

    MicroMlpSpec spec_;
    Mat W1_, W2_, W3_;
    Vec b1_, b2_, b3_;
};

}  // namespace flowguide
