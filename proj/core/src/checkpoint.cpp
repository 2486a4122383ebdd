#include "tst/checkpoint.hpp"

#include <bit>
#include <boost/crc.hpp>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "tst/error.hpp"

namespace tst {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'T', 'M'};
constexpr std::size_t kHeaderSize = 4 + 1 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32(std::span<const std::uint8_t> in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
    return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw CheckpointFormatError("checkpoint config: bad integer for '" + key + "': " + value);
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw CheckpointFormatError("checkpoint config: bad boolean for '" + key + "': " + value);
}

}  // namespace

std::uint64_t crc64(std::span<const std::uint8_t> bytes) {
    // CRC-64/XZ: ECMA-182 polynomial, reflected, all-ones init and xorout.
    boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

std::string config_to_text(const ModelConfig& c, const Metadata& metadata) {
    std::ostringstream os;
    os << "model.window_len=" << c.window_len << '\n'
       << "model.input_dim=" << c.input_dim << '\n'
       << "model.model_dim=" << c.model_dim << '\n'
       << "model.n_heads=" << c.n_heads << '\n'
       << "model.ffn_hidden=" << c.ffn_hidden << '\n'
       << "model.n_blocks=" << c.n_blocks << '\n'
       << "model.use_positional_encoding=" << (c.use_positional_encoding ? "true" : "false") << '\n'
       << "model.use_residual=" << (c.use_residual ? "true" : "false") << '\n'
       << "model.seed=" << c.seed << '\n';
    for (const auto& [key, value] : metadata) {
        if (key.starts_with("model.") || key.find_first_of("=\n") != std::string::npos ||
            value.find('\n') != std::string::npos) {
            throw ContractError("checkpoint metadata key/value not storable: " + key);
        }
        os << key << '=' << value << '\n';
    }
    return os.str();
}

ModelConfig config_from_text(const std::string& text, Metadata* metadata) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    std::size_t seen = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw CheckpointFormatError("checkpoint config: line without '=': " + line);
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (!key.starts_with("model.")) {
            if (metadata != nullptr) (*metadata)[key] = value;
            continue;
        }
        ++seen;
        if (key == "model.window_len") c.window_len = parse_size(key, value);
        else if (key == "model.input_dim") c.input_dim = parse_size(key, value);
        else if (key == "model.model_dim") c.model_dim = parse_size(key, value);
        else if (key == "model.n_heads") c.n_heads = parse_size(key, value);
        else if (key == "model.ffn_hidden") c.ffn_hidden = parse_size(key, value);
        else if (key == "model.n_blocks") c.n_blocks = parse_size(key, value);
        else if (key == "model.use_positional_encoding") c.use_positional_encoding = parse_bool(key, value);
        else if (key == "model.use_residual") c.use_residual = parse_bool(key, value);
        else if (key == "model.seed") c.seed = parse_size(key, value);
        else throw CheckpointFormatError("checkpoint config: unknown key '" + key + "'");
    }
    if (seen != 9) {
        throw CheckpointFormatError("checkpoint config: expected 9 model.* keys, found " +
                                    std::to_string(seen));
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw CheckpointFormatError(std::string("checkpoint config invalid: ") + e.what());
    }
    return c;
}

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params, const ModelConfig& config,
                                            const Metadata& metadata) {
    validate_params(params, config);
    const std::string text = config_to_text(config, metadata);

    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.push_back(kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for_each_param(params, [&](const std::string&, const Tensor& t) {
        for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    });
    put_u64(out, crc64(out));
    return out;
}

LoadedModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointFormatError("not a checkpoint: missing TSTM magic");
    }
    if (bytes[4] != kCheckpointVersion) {
        throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(bytes[4]));
    }
    const std::size_t text_len = get_u32(bytes.subspan(5));
    if (bytes.size() < kHeaderSize + text_len + 8) {
        throw CheckpointFormatError("checkpoint truncated: " + std::to_string(bytes.size()) +
                                    " bytes, config block alone needs " +
                                    std::to_string(kHeaderSize + text_len + 8));
    }
    const std::string text(reinterpret_cast<const char*>(bytes.data() + kHeaderSize), text_len);

    LoadedModel loaded;
    loaded.config = config_from_text(text, &loaded.metadata);

    std::size_t n_values = 0;
    for (const auto& [name, shape] : param_layout(loaded.config)) {
        std::size_t n = 1;
        for (auto e : shape) n *= e;
        n_values += n;
    }
    const std::size_t expected = kHeaderSize + text_len + 8 * n_values + 8;
    if (bytes.size() != expected) {
        throw CheckpointFormatError("checkpoint length " + std::to_string(bytes.size()) +
                                    " does not match expected " + std::to_string(expected));
    }
    const std::uint64_t stored = get_u64(bytes.subspan(expected - 8));
    if (crc64(bytes.first(expected - 8)) != stored) {
        throw CheckpointChecksumError("checkpoint checksum mismatch");
    }

    std::size_t offset = kHeaderSize + text_len;
    std::vector<Tensor> tensors;
    for (const auto& [name, shape] : param_layout(loaded.config)) {
        Tensor t(shape);
        for (auto& v : t.data()) {
            v = std::bit_cast<double>(get_u64(bytes.subspan(offset)));
            offset += 8;
        }
        tensors.push_back(std::move(t));
    }
    loaded.params = params_from_tensors(loaded.config, std::move(tensors));
    return loaded;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw CheckpointIoError("cannot open " + tmp.string() + " for writing");
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            throw CheckpointIoError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw CheckpointIoError("cannot rename into " + path.string());
    }
}

void save_params(const ModelParams& params, const ModelConfig& config,
                 const std::filesystem::path& path, const Metadata& metadata) {
    const auto bytes = encode_checkpoint(params, config, metadata);
    write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

LoadedModel load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointIoError("cannot open checkpoint " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw CheckpointIoError("read failed for " + path.string());
    }
    return decode_checkpoint(bytes);
}

}  // namespace tst
