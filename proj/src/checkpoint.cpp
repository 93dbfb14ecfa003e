#include "tapnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tapnet/errors.hpp"

namespace tapnet {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("cannot open checkpoint for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, 8);
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor_data(const Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
    }
    void close() {
        out_.flush();
        if (!out_) throw DataError("checkpoint write failed");
    }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw DataError("cannot open checkpoint: " + path);
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw DataError("truncated checkpoint: " + path_);
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint8_t b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint8_t b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    void fill_tensor(Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = f64();
    }

private:
    std::ifstream in_;
    std::string path_;
};

struct NamedTensorRef {
    std::string name;
    Tensor* tensor;
};

std::vector<NamedTensorRef> tensor_list(EmbeddingNetwork& net, ReferenceBank& bank) {
    std::vector<NamedTensorRef> out;
    const auto names = net.parameter_names();
    const auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back({names[i], params[i]});
    out.push_back({"references.phi", &bank.phi()});
    return out;
}

} // namespace

void save_checkpoint(const std::string& path, EmbeddingNetwork& net, const ReferenceBank& bank,
                     const AdamOptimizer* opt, const CheckpointMeta& meta) {
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.str(net.descriptor());
    w.u32(static_cast<std::uint32_t>(net.output_dim()));
    w.u32(static_cast<std::uint32_t>(bank.way()));
    w.u64(meta.episodes_trained);
    w.u64(meta.seed);
    w.str(meta.config_echo);

    auto tensors = tensor_list(net, const_cast<ReferenceBank&>(bank));
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& nt : tensors) {
        w.str(nt.name);
        w.u32(static_cast<std::uint32_t>(nt.tensor->rank()));
        for (std::size_t d : nt.tensor->shape()) w.u64(d);
        w.tensor_data(*nt.tensor);
    }

    w.u8(opt ? 1 : 0);
    if (opt) {
        w.u64(opt->step_count());
        w.f64(opt->config().beta1);
        w.f64(opt->config().beta2);
        w.f64(opt->config().eps);
        for (const Tensor& m : opt->first_moments()) w.tensor_data(m);
        for (const Tensor& v : opt->second_moments()) w.tensor_data(v);
    }
    w.close();
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a checkpoint file (bad magic): " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));

    const std::string descriptor = r.str();
    const std::uint32_t l = r.u32();
    const std::uint32_t n_way = r.u32();

    CheckpointMeta meta;
    meta.episodes_trained = r.u64();
    meta.seed = r.u64();
    meta.config_echo = r.str();

    EmbeddingNetwork net = EmbeddingNetwork::from_descriptor(descriptor);
    if (net.output_dim() != l)
        throw DataError("checkpoint embedding dimension disagrees with its architecture");
    ReferenceBank bank(n_way, l);

    auto tensors = tensor_list(net, bank);
    const std::uint32_t count = r.u32();
    if (count != tensors.size())
        throw DataError("checkpoint tensor count does not match the architecture");
    for (auto& nt : tensors) {
        const std::string name = r.str();
        if (name != nt.name)
            throw DataError("unexpected checkpoint tensor '" + name + "' (expected '" + nt.name +
                            "')");
        const std::uint32_t rank = r.u32();
        if (rank != nt.tensor->rank()) throw DataError("tensor rank mismatch for " + name);
        for (std::size_t i = 0; i < rank; ++i)
            if (r.u64() != nt.tensor->dim(i)) throw DataError("tensor shape mismatch for " + name);
        r.fill_tensor(*nt.tensor);
    }

    LoadedCheckpoint loaded{std::move(net), std::move(bank), std::nullopt, std::move(meta)};
    if (r.u8()) {
        OptimizerBlob blob;
        blob.step_count = r.u64();
        blob.config.beta1 = r.f64();
        blob.config.beta2 = r.f64();
        blob.config.eps = r.f64();
        auto loaded_tensors = tensor_list(loaded.net, loaded.bank);
        for (const auto& nt : loaded_tensors) {
            Tensor m(nt.tensor->shape());
            r.fill_tensor(m);
            blob.m.push_back(std::move(m));
        }
        for (const auto& nt : loaded_tensors) {
            Tensor v(nt.tensor->shape());
            r.fill_tensor(v);
            blob.v.push_back(std::move(v));
        }
        loaded.optimizer = std::move(blob);
    }
    return loaded;
}

} // namespace tapnet
