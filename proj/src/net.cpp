#include "iib/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "iib/errors.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint io assumes a little-endian host");

namespace iib {

std::size_t DenseNet::num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

bool DenseNet::all_params_finite() const {
    for (const auto& l : layers)
        if (!all_finite(l.w) || !all_finite(l.b)) return false;
    return true;
}

DenseNet make_dense_net(std::span<const std::size_t> dims, std::span<const Activation> acts, Rng rng) {
    if (dims.size() < 2) throw InvalidInput("make_dense_net: need at least input and output dims");
    if (acts.size() != dims.size() - 1) throw InvalidInput("make_dense_net: one activation per layer required");
    DenseNet net;
    net.layers.reserve(acts.size());
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer l;
        l.w = Matrix(dims[i + 1], dims[i]);
        l.b.assign(dims[i + 1], 0.0);
        l.act = acts[i];
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[i] + dims[i + 1]));
        for (double& x : l.w.data) x = rng.uniform(-bound, bound);
        net.layers.push_back(std::move(l));
    }
    return net;
}

DenseNet make_mlp(std::span<const std::size_t> dims, Rng rng) {
    std::vector<Activation> acts(dims.size() - 1, Activation::kRelu);
    acts.back() = Activation::kIdentity;
    return make_dense_net(dims, acts, rng);
}

static void apply_activation(Activation act, const Vec& pre, Vec& post) {
    post = pre;
    if (act == Activation::kRelu)
        for (double& x : post) x = x > 0.0 ? x : 0.0;
}

Vec forward(const DenseNet& net, const Vec& input) {
    if (net.layers.empty()) throw InvalidInput("forward: empty net");
    if (input.size() != net.input_dim()) throw InvalidInput("forward: input length does not match net input_dim");
    Vec cur = input, pre;
    for (const auto& l : net.layers) {
        matvec(l.w, cur, pre);
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += l.b[i];
        apply_activation(l.act, pre, cur);
    }
    return cur;
}

void forward(const DenseNet& net, const Vec& input, ForwardTape& tape) {
    if (net.layers.empty()) throw InvalidInput("forward: empty net");
    if (input.size() != net.input_dim()) throw InvalidInput("forward: input length does not match net input_dim");
    tape.input = input;
    tape.pre.resize(net.layers.size());
    tape.post.resize(net.layers.size());
    const Vec* cur = &tape.input;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        matvec(l.w, *cur, tape.pre[i]);
        for (std::size_t j = 0; j < tape.pre[i].size(); ++j) tape.pre[i][j] += l.b[j];
        apply_activation(l.act, tape.pre[i], tape.post[i]);
        cur = &tape.post[i];
    }
}

NetGrads NetGrads::zeros_like(const DenseNet& net) {
    NetGrads g;
    g.w.reserve(net.layers.size());
    g.b.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        g.w.emplace_back(l.w.rows, l.w.cols);
        g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

void NetGrads::clear() {
    for (auto& m : w) std::fill(m.data.begin(), m.data.end(), 0.0);
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
}

void NetGrads::add_scaled(const NetGrads& other, double s) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        for (std::size_t j = 0; j < w[i].data.size(); ++j) w[i].data[j] += s * other.w[i].data[j];
        for (std::size_t j = 0; j < b[i].size(); ++j) b[i][j] += s * other.b[i][j];
    }
}

bool NetGrads::all_finite() const {
    for (const auto& m : w)
        if (!iib::all_finite(m)) return false;
    for (const auto& v : b)
        if (!iib::all_finite(v)) return false;
    return true;
}

Vec backward(const DenseNet& net, const ForwardTape& tape, const Vec& output_grad, NetGrads& grads) {
    const std::size_t n = net.layers.size();
    if (tape.pre.size() != n || tape.post.size() != n || tape.input.size() != net.input_dim())
        throw InvalidInput("backward: tape does not match net");
    for (std::size_t i = 0; i < n; ++i)
        if (tape.pre[i].size() != net.layers[i].w.rows) throw InvalidInput("backward: tape does not match net");
    if (output_grad.size() != net.output_dim()) throw InvalidInput("backward: output_grad length mismatch");
    if (grads.w.size() != n) throw InvalidInput("backward: grads shape mismatch");

    Vec delta = output_grad;  // gradient w.r.t. current layer post-activation
    Vec next;
    for (std::size_t i = n; i-- > 0;) {
        const Layer& l = net.layers[i];
        if (l.act == Activation::kRelu) {
            for (std::size_t j = 0; j < delta.size(); ++j)
                if (tape.pre[i][j] <= 0.0) delta[j] = 0.0;
        }
        const Vec& in = (i == 0) ? tape.input : tape.post[i - 1];
        add_outer(grads.w[i], delta, in);
        for (std::size_t j = 0; j < delta.size(); ++j) grads.b[i][j] += delta[j];
        if (i > 0) {
            matvec_transposed(l.w, delta, next);
            delta.swap(next);
        } else {
            matvec_transposed(l.w, delta, next);
            return next;
        }
    }
    return Vec(net.input_dim(), 0.0);  // unreachable for non-empty nets
}

AdamState AdamState::zeros_like(const DenseNet& net, AdamConfig cfg) {
    AdamState st;
    st.cfg = cfg;
    for (const auto& l : net.layers) {
        st.m_w.emplace_back(l.w.rows, l.w.cols);
        st.v_w.emplace_back(l.w.rows, l.w.cols);
        st.m_b.emplace_back(l.b.size(), 0.0);
        st.v_b.emplace_back(l.b.size(), 0.0);
    }
    return st;
}

static void adam_update_block(double* p, const double* g, double* m, double* v, std::size_t n,
                              const AdamConfig& cfg, double bc1, double bc2, std::string_view path,
                              const char* block, std::size_t layer) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(g[i])) {
            std::ostringstream msg;
            msg << "non-finite gradient at " << path << ".layer[" << layer << "]." << block << "[" << i << "]";
            throw TrainingAbort(msg.str());
        }
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state, std::string_view path) {
    if (grads.w.size() != net.layers.size() || state.m_w.size() != net.layers.size())
        throw InvalidInput("adam_step: shape mismatch");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Layer& l = net.layers[i];
        adam_update_block(l.w.data.data(), grads.w[i].data.data(), state.m_w[i].data.data(),
                          state.v_w[i].data.data(), l.w.size(), state.cfg, bc1, bc2, path, "w", i);
        adam_update_block(l.b.data(), grads.b[i].data(), state.m_b[i].data(), state.v_b[i].data(), l.b.size(),
                          state.cfg, bc1, bc2, path, "b", i);
    }
}

// ---- checkpoint io ---------------------------------------------------------

static constexpr char kNetMagic[8] = {'I', 'I', 'B', 'N', 'E', 'T', '0', '1'};
static constexpr std::uint32_t kNetVersion = 1;

template <class T>
static void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
static T read_pod(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) throw IoError("checkpoint: unexpected end of stream");
    return value;
}

void save_net(std::ostream& os, const DenseNet& net) {
    os.write(kNetMagic, sizeof(kNetMagic));
    write_pod(os, kNetVersion);
    write_pod(os, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
        write_pod(os, static_cast<std::uint32_t>(l.w.rows));
        write_pod(os, static_cast<std::uint32_t>(l.w.cols));
        write_pod(os, static_cast<std::uint8_t>(l.act));
    }
    for (const auto& l : net.layers) {
        os.write(reinterpret_cast<const char*>(l.w.data.data()),
                 static_cast<std::streamsize>(l.w.data.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(l.b.data()), static_cast<std::streamsize>(l.b.size() * sizeof(double)));
    }
    if (!os) throw IoError("checkpoint: write failed");
}

DenseNet load_net(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kNetMagic, sizeof(magic)) != 0) throw IoError("checkpoint: bad net magic");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kNetVersion) throw IoError("checkpoint: unsupported net version");
    const auto n_layers = read_pod<std::uint32_t>(is);
    DenseNet net;
    net.layers.resize(n_layers);
    for (auto& l : net.layers) {
        const auto rows = read_pod<std::uint32_t>(is);
        const auto cols = read_pod<std::uint32_t>(is);
        const auto act = read_pod<std::uint8_t>(is);
        if (act > 1) throw IoError("checkpoint: unknown activation code");
        l.w = Matrix(rows, cols);
        l.b.assign(rows, 0.0);
        l.act = static_cast<Activation>(act);
    }
    for (auto& l : net.layers) {
        is.read(reinterpret_cast<char*>(l.w.data.data()), static_cast<std::streamsize>(l.w.data.size() * sizeof(double)));
        is.read(reinterpret_cast<char*>(l.b.data()), static_cast<std::streamsize>(l.b.size() * sizeof(double)));
        if (!is) throw IoError("checkpoint: truncated net payload");
    }
    for (std::size_t i = 1; i < net.layers.size(); ++i)
        if (net.layers[i].w.cols != net.layers[i - 1].w.rows) throw IoError("checkpoint: layer dims do not chain");
    return net;
}

void save_net_file(const std::string& path, const DenseNet& net) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    save_net(os, net);
}

DenseNet load_net_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    return load_net(is);
}

}  // namespace iib
