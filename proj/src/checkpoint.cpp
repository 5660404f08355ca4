#include "fibershape/error.hpp"
#include "fibershape/trainer.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace fibershape {
namespace {

constexpr char kMagic[8] = {'F', 'S', 'H', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    template <typename V>
    void put(const V& v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(V));
    }
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    template <typename T>
    void matrix(const nn::Matrix<T>& m) {
        put(static_cast<std::uint32_t>(m.rows()));
        put(static_cast<std::uint32_t>(m.cols()));
        bytes(m.data(), sizeof(T) * static_cast<std::size_t>(m.size()));
    }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
    template <typename V>
    V get() {
        V v;
        take(&v, sizeof(V));
        return v;
    }
    void take(void* out, std::size_t n) {
        if (n > end_ - pos_) throw InvalidInput("checkpoint: truncated file");
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    nn::Matrix<T> matrix() {
        const auto rows = get<std::uint32_t>();
        const auto cols = get<std::uint32_t>();
        if (static_cast<std::uint64_t>(rows) * cols * sizeof(T) > end_ - pos_) {
            throw InvalidInput("checkpoint: tensor shape exceeds file size");
        }
        nn::Matrix<T> m(rows, cols);
        take(m.data(), sizeof(T) * static_cast<std::size_t>(m.size()));
        return m;
    }
    bool done() const { return pos_ == end_; }

private:
    const std::string& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void Trainer<T>::save_checkpoint(const std::filesystem::path& path) const {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.put(kVersion);
    w.put(static_cast<std::uint32_t>(sizeof(T)));
    const std::string cfg = to_json(cfg_).dump();
    w.put(static_cast<std::uint64_t>(cfg.size()));
    w.bytes(cfg.data(), cfg.size());
    w.put(static_cast<std::int64_t>(iteration_));
    w.put(static_cast<std::int64_t>(adam_.step));
    w.put(static_cast<std::int32_t>(consecutive_aborts_));
    w.put(static_cast<std::uint64_t>(history_.size()));
    for (const auto& r : history_) {
        w.put(static_cast<std::int64_t>(r.iteration));
        w.put(r.loss);
        w.put(static_cast<std::uint32_t>(r.channel_gmi.size()));
        for (double g : r.channel_gmi) w.put(g);
    }
    const auto params = models_.parameters();
    w.put(static_cast<std::uint64_t>(params.size()));
    for (const auto& p : params) w.matrix(p.value());
    w.put(static_cast<std::uint64_t>(adam_.m.size()));
    for (const auto& m : adam_.m) w.matrix(m);
    for (const auto& v : adam_.v) w.matrix(v);
    auto& buf = w.buffer();
    const std::uint64_t sum = fnv1a(buf.data(), buf.size());
    buf.append(reinterpret_cast<const char*>(&sum), sizeof sum);

    const auto tmp = std::filesystem::path(path).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("checkpoint: cannot write " + tmp.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw InvalidInput("checkpoint: write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

template <typename T>
Trainer<T> Trainer<T>::load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("checkpoint: cannot open " + path.string());
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof kMagic + 16 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
        throw InvalidInput("checkpoint: " + path.string() + " is not a checkpoint file (bad magic)");
    }
    const std::size_t body = buf.size() - sizeof(std::uint64_t);
    std::uint64_t stored = 0;
    std::memcpy(&stored, buf.data() + body, sizeof stored);
    if (stored != fnv1a(buf.data(), body)) throw InvalidInput("checkpoint: checksum mismatch, file is corrupt");

    Reader r(buf, body);
    char magic[8];
    r.take(magic, sizeof magic);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) {
        throw InvalidInput("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                           std::to_string(kVersion) + ")");
    }
    const auto scalar = r.get<std::uint32_t>();
    if (scalar != sizeof(T)) {
        throw InvalidInput("checkpoint: precision mismatch (file has " + std::to_string(8 * scalar) + "-bit scalars)");
    }
    std::string cfg_text(r.get<std::uint64_t>(), '\0');
    r.take(cfg_text.data(), cfg_text.size());
    nlohmann::json cfg_json;
    try {
        cfg_json = nlohmann::json::parse(cfg_text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("checkpoint: bad config block: ") + e.what());
    }
    Trainer t(train_config_from_json(cfg_json));
    t.iteration_ = r.get<std::int64_t>();
    t.adam_.step = r.get<std::int64_t>();
    t.consecutive_aborts_ = r.get<std::int32_t>();
    const auto n_hist = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n_hist; ++i) {
        LossRecord rec;
        rec.iteration = r.get<std::int64_t>();
        rec.loss = r.get<double>();
        const auto nc = r.get<std::uint32_t>();
        for (std::uint32_t c = 0; c < nc; ++c) rec.channel_gmi.push_back(r.get<double>());
        t.history_.push_back(std::move(rec));
    }
    auto params = t.models_.parameters();
    if (r.get<std::uint64_t>() != params.size()) throw InvalidInput("checkpoint: parameter count mismatch");
    for (auto& p : params) {
        auto m = r.matrix<T>();
        if (m.rows() != p.rows() || m.cols() != p.cols()) throw InvalidInput("checkpoint: parameter shape mismatch");
        p.mutable_value() = std::move(m);
    }
    const auto n_moments = r.get<std::uint64_t>();
    if (n_moments != 0 && n_moments != t.trainable().size()) throw InvalidInput("checkpoint: optimizer state mismatch");
    for (std::uint64_t i = 0; i < n_moments; ++i) t.adam_.m.push_back(r.matrix<T>());
    for (std::uint64_t i = 0; i < n_moments; ++i) t.adam_.v.push_back(r.matrix<T>());
    if (!r.done()) throw InvalidInput("checkpoint: trailing bytes");
    return t;
}

template void Trainer<float>::save_checkpoint(const std::filesystem::path&) const;
template void Trainer<double>::save_checkpoint(const std::filesystem::path&) const;
template Trainer<float> Trainer<float>::load_checkpoint(const std::filesystem::path&);
template Trainer<double> Trainer<double>::load_checkpoint(const std::filesystem::path&);

}  // namespace fibershape
