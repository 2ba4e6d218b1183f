#include "kgc/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "kgc/error.hpp"
#include "kgc/hash.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace kgc {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'K', 'G', 'C', 'C', 'K', 'P', 'T', '1'};

template <typename V>
void put(std::string& out, V v) {
    char buf[sizeof(V)];
    std::memcpy(buf, &v, sizeof(V));
    out.append(buf, sizeof(V));
}

class Reader {
public:
    Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

    template <typename V>
    V get() {
        V v;
        std::memcpy(&v, take(sizeof(V)), sizeof(V));
        return v;
    }
    std::string bytes(std::size_t n) { return std::string(take(n), n); }
    bool done() const { return pos_ == data_.size(); }

private:
    const char* take(std::size_t n) {
        if (n > data_.size() - pos_) throw ParseError(source_ + ": truncated checkpoint");
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    const std::string& data_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    json header{{"format", 1},
                {"precision", "float32"},
                {"model", to_json(c.model)},
                {"loss", to_json(c.loss)},
                {"train", to_json(c.train)},
                {"dataset", c.dataset},
                {"vocab_hash", c.vocab_hash},
                {"best_valid_mrr", c.best_valid_mrr},
                {"epoch", c.epoch},
                {"seed", c.seed},
                {"param_seed", c.params.seed()}};
    const std::string h = header.dump();
    std::string out(kMagic, sizeof kMagic);
    put<std::uint64_t>(out, h.size());
    out += h;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.params.names().size()));
    for (const auto& name : c.params.names()) {
        const auto& t = c.params.get(name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
        out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
    }
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError(path.string() + ": checkpoint not found");
    const std::string data = read_file(path);
    Reader r(data, path.string());
    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
        throw ParseError(path.string() + ": not a checkpoint file");
    const auto hlen = r.get<std::uint64_t>();
    json header;
    try {
        header = json::parse(r.bytes(hlen));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": corrupt checkpoint header: " + e.what());
    }
    Checkpoint c;
    try {
        c.model = model_config_from_json(header.at("model"));
        c.loss = loss_config_from_json(header.at("loss"));
        c.train = train_config_from_json(header.at("train"));
        c.dataset = header.at("dataset").get<std::string>();
        c.vocab_hash = header.at("vocab_hash").get<std::string>();
        c.best_valid_mrr = header.at("best_valid_mrr").get<double>();
        c.epoch = header.at("epoch").get<std::size_t>();
        c.seed = header.at("seed").get<std::uint64_t>();
        c.params = ad::ParameterStore<float>(header.at("param_seed").get<std::uint64_t>());
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": checkpoint header: " + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.bytes(r.get<std::uint32_t>());
        ad::Shape shape(r.get<std::uint32_t>());
        for (auto& e : shape) e = r.get<std::uint64_t>();
        ad::Tensor<float> t(shape);
        const std::string raw = r.bytes(t.size() * sizeof(float));
        std::memcpy(t.data(), raw.data(), raw.size());
        c.params.add(name, std::move(t));
    }
    if (!r.done()) throw ParseError(path.string() + ": trailing bytes after checkpoint tensors");
    return c;
}

}  // namespace kgc
