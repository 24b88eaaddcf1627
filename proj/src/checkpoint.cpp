#include "rxpp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace rxpp {

namespace {

constexpr char kMagic[4] = {'R', 'X', 'P', 'P'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<uint32_t>(t.rank()));
    for (size_t d : t.shape) write_u64(out, static_cast<uint64_t>(d));
    std::vector<float> f32(t.size());
    for (size_t i = 0; i < t.size(); ++i) f32[i] = static_cast<float>(t.data[i]);
    out.write(reinterpret_cast<const char*>(f32.data()),
              static_cast<std::streamsize>(f32.size() * sizeof(float)));
}

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

NamedTensor read_tensor(std::istream& in) {
    NamedTensor nt;
    uint32_t name_len = read_u32(in);
    nt.name.resize(name_len);
    in.read(nt.name.data(), name_len);
    uint32_t rank = read_u32(in);
    nt.tensor.shape.resize(rank);
    size_t total = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        nt.tensor.shape[i] = static_cast<size_t>(read_u64(in));
        total *= nt.tensor.shape[i];
    }
    std::vector<float> f32(total);
    in.read(reinterpret_cast<char*>(f32.data()), static_cast<std::streamsize>(total * sizeof(float)));
    nt.tensor.data.resize(total);
    for (size_t i = 0; i < total; ++i) nt.tensor.data[i] = static_cast<double>(f32[i]);
    return nt;
}

Tensor mask_tensor(const PrototypeBank& bank) {
    Tensor t = Tensor::vec(bank.init_mask.size());
    for (size_t i = 0; i < bank.init_mask.size(); ++i) t.data[i] = bank.init_mask[i] ? 1.0 : 0.0;
    return t;
}

}  // namespace

void save_checkpoint(const RelationModel& model, const std::string& config_echo_json,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, static_cast<uint64_t>(config_echo_json.size()));
    out.write(config_echo_json.data(), static_cast<std::streamsize>(config_echo_json.size()));

    uint32_t count = static_cast<uint32_t>(model.params().count()) + 2;
    write_u32(out, count);
    for (const auto& e : model.params().entries()) write_tensor(out, e.name, e.value);
    write_tensor(out, "bank.ema", model.bank().ema);
    write_tensor(out, "bank.init_mask", mask_tensor(model.bank()));
}

namespace {

std::string open_and_read_header(std::ifstream& in, const std::string& path) {
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = read_u32(in);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    uint64_t json_len = read_u64(in);
    std::string config(json_len, '\0');
    in.read(config.data(), static_cast<std::streamsize>(json_len));
    return config;
}

}  // namespace

std::string read_checkpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return open_and_read_header(in, path);
}

void load_checkpoint_into(RelationModel& model, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    open_and_read_header(in, path);
    uint32_t count = read_u32(in);
    std::map<std::string, Tensor> tensors;
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor nt = read_tensor(in);
        if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
        tensors[nt.name] = std::move(nt.tensor);
    }
    for (auto& e : model.params().entries()) {
        auto it = tensors.find(e.name);
        if (it == tensors.end())
            throw std::runtime_error("checkpoint: missing tensor " + e.name);
        if (it->second.shape != e.value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + e.name);
        e.value = it->second;
    }
    auto ema = tensors.find("bank.ema");
    auto mask = tensors.find("bank.init_mask");
    if (ema == tensors.end() || mask == tensors.end())
        throw std::runtime_error("checkpoint: missing prototype bank state");
    if (ema->second.shape != model.bank().ema.shape)
        throw std::runtime_error("checkpoint: bank shape mismatch");
    model.bank().ema = ema->second;
    for (size_t i = 0; i < model.bank().init_mask.size(); ++i)
        model.bank().init_mask[i] = mask->second.data[i] != 0.0 ? 1 : 0;
}

}  // namespace rxpp
