#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "xlstm/model.hpp"

// Checkpoint layout (little-endian):
//   8 bytes   magic "XLSTMCK1"
//   u32       number of config entries
//   per entry u32 key length, key bytes, u32 value length, value bytes
//   u32       number of tensors
//   per tensor u32 name length, name bytes, u32 rank, u64 dims[rank],
//             f64 raw data
//   u64       FNV-1a 64 checksum of everything above

namespace xlstm {

namespace {

constexpr char kMagic[8] = {'X', 'L', 'S', 'T', 'M', 'C', 'K', '1'};

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

void put_doubles(std::string& out, const double* data, std::size_t n) {
    static_assert(sizeof(double) == 8);
    const char* raw = reinterpret_cast<const char*>(data);
    out.append(raw, raw + n * 8);
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i]))
                 << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i]))
                 << (8 * i);
        pos += 8;
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    void doubles(double* out, std::size_t n) {
        need(n * 8);
        std::memcpy(out, bytes.data() + pos, n * 8);
        pos += n * 8;
    }
};

std::map<std::string, std::string> config_entries(const ModelConfig& c) {
    return {
        {"lookback", std::to_string(c.lookback)},
        {"horizon", std::to_string(c.horizon)},
        {"channels", std::to_string(c.channels)},
        {"hidden_dim", std::to_string(c.hidden_dim)},
        {"cell_steps", std::to_string(c.cell_steps)},
        {"backend", backend_name(c.backend)},
        {"decomp_window", std::to_string(c.decomp_window)},
        {"decomp_learnable", c.decomp_learnable ? "1" : "0"},
        {"forget_gate", forget_gate_name(c.forget_gate)},
        {"readout_denom", readout_denom_name(c.readout_denom)},
        {"instnorm", instnorm_name(c.instnorm)},
        {"seed", std::to_string(c.seed)},
    };
}

ModelConfig config_from_entries(const std::map<std::string, std::string>& e) {
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = e.find(key);
        if (it == e.end())
            throw std::runtime_error("checkpoint: missing config key '" + key + "'");
        return it->second;
    };
    ModelConfig c;
    c.lookback = std::stoull(get("lookback"));
    c.horizon = std::stoull(get("horizon"));
    c.channels = std::stoull(get("channels"));
    c.hidden_dim = std::stoull(get("hidden_dim"));
    c.cell_steps = std::stoull(get("cell_steps"));
    c.backend = get("backend") == "mlstm" ? Backend::kMlstm : Backend::kSlstm;
    c.decomp_window = std::stoull(get("decomp_window"));
    c.decomp_learnable = get("decomp_learnable") == "1";
    c.forget_gate =
        get("forget_gate") == "exp" ? ForgetGate::kExp : ForgetGate::kSigmoid;
    c.readout_denom = get("readout_denom") == "strict" ? ReadoutDenominator::kStrict : ReadoutDenominator::kAbs;
    const std::string in = get("instnorm");
    c.instnorm = in == "revin"    ? InstNorm::kRevin
                 : in == "literal" ? InstNorm::kLiteral
                                   : InstNorm::kOff;
    c.seed = std::stoull(get("seed"));
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     ModelParams& params,
                     const std::vector<std::pair<std::string, Vector>>& extra) {
    std::string out;
    out.append(kMagic, 8);

    const auto entries = config_entries(config);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [key, value] : entries) {
        put_string(out, key);
        put_string(out, value);
    }

    const auto blocks = param_blocks(params);
    put_u32(out, static_cast<std::uint32_t>(blocks.size() + extra.size()));
    for (const auto& block : blocks) {
        put_string(out, block.name);
        put_u32(out, 1);
        put_u64(out, block.size);
        put_doubles(out, block.data, block.size);
    }
    for (const auto& [name, values] : extra) {
        put_string(out, name);
        put_u32(out, 1);
        put_u64(out, values.size());
        put_doubles(out, values.data(), values.size());
    }

    put_u64(out, fnv1a64(out));

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("save_checkpoint: cannot write '" + path + "'");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(file)),
                      std::istreambuf_iterator<char>());

    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: '" + path +
                                 "' is not a checkpoint file");
    const std::string body = bytes.substr(0, bytes.size() - 8);
    Reader tail{bytes, bytes.size() - 8};
    if (tail.u64() != fnv1a64(body))
        throw std::runtime_error("load_checkpoint: checksum mismatch in '" + path + "'");

    Reader r{body, 8};
    std::map<std::string, std::string> entries;
    const std::uint32_t n_entries = r.u32();
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        std::string key = r.str();
        entries[key] = r.str();
    }

    Checkpoint ckpt;
    ckpt.config = config_from_entries(entries);
    ckpt.params = init_model(ckpt.config);

    std::map<std::string, std::pair<double*, std::size_t>> targets;
    for (const auto& block : param_blocks(ckpt.params))
        targets[block.name] = {block.data, block.size};

    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = r.str();
        const std::uint32_t rank = r.u32();
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) count *= r.u64();
        auto it = targets.find(name);
        if (it == targets.end()) {
            Vector extra_values(count);
            r.doubles(extra_values.data(), count);
            ckpt.extra.emplace_back(name, std::move(extra_values));
            continue;
        }
        if (it->second.second != count)
            throw std::runtime_error("load_checkpoint: tensor '" + name + "' has " +
                                     std::to_string(count) + " values, expected " +
                                     std::to_string(it->second.second));
        r.doubles(it->second.first, count);
    }
    return ckpt;
}

}  // namespace xlstm
