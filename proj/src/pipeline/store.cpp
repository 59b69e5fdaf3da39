#include "pkt/pipeline/store.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>

#include "pkt/core/binary_io.hpp"
#include "pkt/core/errors.hpp"
#include "pkt/core/fs.hpp"

namespace pkt::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr char kPrefixMagic[4] = {'P', 'K', 'T', 'P'};
constexpr char kReparamMagic[4] = {'P', 'K', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

void expect_magic(std::istream& in, const char (&magic)[4], const std::string& what) {
    char m[4];
    binio::read_exact(in, m, 4, what);
    if (!std::equal(m, m + 4, magic)) throw DataError(what + ": bad magic");
    const std::uint32_t v = binio::read_u32(in, what);
    if (v != kVersion) throw DataError(what + ": unsupported version " + std::to_string(v));
}

void expect_end(std::istream& in, const std::string& what) {
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(what + ": trailing bytes");
}

std::mutex& key_mutex(const fs::path& p) {
    static std::mutex registry_mu;
    static std::map<std::string, std::mutex> registry;
    std::lock_guard lock(registry_mu);
    return registry[fs::absolute(p).lexically_normal().string()];
}

}  // namespace

void write_prefix_file(const fs::path& path, const lm::DeployedPrefix& p) {
    if (p.activations.size() != 2ull * p.n_layers * p.length * p.d_model)
        throw ShapeError("deployed prefix has " + std::to_string(p.activations.size()) + " floats, dims imply " +
                         std::to_string(2ull * p.n_layers * p.length * p.d_model));
    fsutil::atomic_write(path, [&](std::ostream& out) {
        out.write(kPrefixMagic, 4);
        binio::write_u32(out, kVersion);
        out.write(reinterpret_cast<const char*>(p.backbone_digest.data()), 32);
        binio::write_u32(out, p.n_layers);
        binio::write_u32(out, p.length);
        binio::write_u32(out, p.d_model);
        binio::write_f64s(out, p.activations);
    });
}

lm::DeployedPrefix read_prefix_file(const fs::path& path) {
    const std::string what = "prefix file " + path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError(what + ": cannot open");
    expect_magic(in, kPrefixMagic, what);
    lm::DeployedPrefix p;
    binio::read_exact(in, p.backbone_digest.data(), 32, what);
    p.n_layers = binio::read_u32(in, what);
    p.length = binio::read_u32(in, what);
    p.d_model = binio::read_u32(in, what);
    p.activations.resize(2ull * p.n_layers * p.length * p.d_model);
    binio::read_f64s(in, p.activations, what);
    expect_end(in, what);
    return p;
}

void write_reparam_file(const fs::path& path, const lm::PrefixParams& p) {
    fsutil::atomic_write(path, [&](std::ostream& out) {
        out.write(kReparamMagic, 4);
        binio::write_u32(out, kVersion);
        out.write(reinterpret_cast<const char*>(p.backbone_digest.data()), 32);
        for (std::uint32_t v : {p.n_layers, p.length, p.d_model, p.hidden}) binio::write_u32(out, v);
        for (const Array* a : p.tensors()) binio::write_f64s(out, a->data());
    });
}

lm::PrefixParams read_reparam_file(const fs::path& path) {
    const std::string what = "reparam file " + path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError(what + ": cannot open");
    expect_magic(in, kReparamMagic, what);
    lm::PrefixParams p;
    binio::read_exact(in, p.backbone_digest.data(), 32, what);
    p.n_layers = binio::read_u32(in, what);
    p.length = binio::read_u32(in, what);
    p.d_model = binio::read_u32(in, what);
    p.hidden = binio::read_u32(in, what);
    const std::size_t L = p.length, d = p.d_model, h = p.hidden, out = 2ull * p.n_layers * d;
    p.embedding = Array({L, d});
    p.w_in = Array({d, h});
    p.b_in = Array({h});
    p.w_out = Array({h, out});
    p.b_out = Array({out});
    for (NamedArray t : p.tensors()) binio::read_f64s(in, t.value->data(), what);
    expect_end(in, what);
    return p;
}

PrefixStore::PrefixStore(fs::path dir, const Digest& backbone_digest) : dir_(std::move(dir)), digest_(backbone_digest) {
    fs::create_directories(dir_);
    const fs::path meta = dir_ / "store.json";
    std::lock_guard lock(key_mutex(meta));
    if (fs::exists(meta)) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(fsutil::read_text(meta));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("store " + dir_.string() + ": malformed store.json");
        }
        const std::string stored = j.value("backbone_digest", "");
        if (stored != to_hex(digest_))
            throw DataError("store " + dir_.string() + " belongs to backbone " + stored + ", not " + to_hex(digest_));
    } else {
        fsutil::atomic_write(meta, [&](std::ostream& out) {
            out << nlohmann::json{{"backbone_digest", to_hex(digest_)}}.dump(2) << '\n';
        });
    }
}

fs::path PrefixStore::entry(const std::string& key, const char* suffix) const { return dir_ / (key + suffix); }

void PrefixStore::check_key(const std::string& key) const {
    const bool ok = !key.empty() && key.front() != '.' && key != "store" &&
                    std::all_of(key.begin(), key.end(), [](char c) {
                        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
                    });
    if (!ok) throw DataError("invalid store key '" + key + "'");
}

void PrefixStore::put(const std::string& key, const lm::PrefixParams& prefix, nlohmann::json metadata,
                      bool keep_reparam) {
    if (prefix.backbone_digest != digest_)
        throw DataError("prefix for '" + key + "' was trained on backbone " + to_hex(prefix.backbone_digest) +
                        ", store expects " + to_hex(digest_));
    put_deployed(key, prefix.deploy(), std::move(metadata));
    if (keep_reparam) {
        std::lock_guard lock(key_mutex(entry(key, ".pktp")));
        write_reparam_file(entry(key, ".reparam.bin"), prefix);
    }
}

void PrefixStore::put_deployed(const std::string& key, const lm::DeployedPrefix& prefix, nlohmann::json metadata) {
    check_key(key);
    if (prefix.backbone_digest != digest_)
        throw DataError("prefix for '" + key + "' was trained on backbone " + to_hex(prefix.backbone_digest) +
                        ", store expects " + to_hex(digest_));
    std::lock_guard lock(key_mutex(entry(key, ".pktp")));
    std::uint64_t revision = 1;
    const fs::path meta = entry(key, ".json");
    if (fs::exists(meta)) {
        try {
            revision = nlohmann::json::parse(fsutil::read_text(meta)).value("revision", std::uint64_t{0}) + 1;
        } catch (const nlohmann::json::exception&) {
        }
    }
    metadata["key"] = key;
    metadata["revision"] = revision;
    metadata["backbone_digest"] = to_hex(digest_);
    metadata["deployed_floats"] = prefix.count();
    write_prefix_file(entry(key, ".pktp"), prefix);
    fsutil::atomic_write(meta, [&](std::ostream& out) { out << metadata.dump(2) << '\n'; });
    std::error_code ec;
    fs::remove(entry(key, ".reparam.bin"), ec);
}

lm::DeployedPrefix PrefixStore::load(const std::string& key) const {
    check_key(key);
    const fs::path p = entry(key, ".pktp");
    if (!fs::exists(p)) throw NotFoundError("store " + dir_.string() + " has no prefix '" + key + "'");
    lm::DeployedPrefix d = read_prefix_file(p);
    if (d.backbone_digest != digest_)
        throw DataError("stored prefix '" + key + "' belongs to backbone " + to_hex(d.backbone_digest));
    return d;
}

lm::PrefixParams PrefixStore::load_reparam(const std::string& key) const {
    check_key(key);
    const fs::path p = entry(key, ".reparam.bin");
    if (!fs::exists(p)) throw NotFoundError("store " + dir_.string() + " has no training state for '" + key + "'");
    lm::PrefixParams r = read_reparam_file(p);
    if (r.backbone_digest != digest_)
        throw DataError("stored training state '" + key + "' belongs to backbone " + to_hex(r.backbone_digest));
    return r;
}

nlohmann::json PrefixStore::metadata(const std::string& key) const {
    check_key(key);
    const fs::path p = entry(key, ".json");
    if (!fs::exists(p)) throw NotFoundError("store " + dir_.string() + " has no prefix '" + key + "'");
    return nlohmann::json::parse(fsutil::read_text(p));
}

bool PrefixStore::contains(const std::string& key) const { return fs::exists(entry(key, ".pktp")); }

std::vector<std::string> PrefixStore::keys() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir_)) {
        if (e.path().extension() == ".pktp") out.push_back(e.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t PrefixStore::total_floats() const {
    std::size_t n = 0;
    for (const auto& k : keys()) n += load(k).count();
    return n;
}

}  // namespace pkt::pipeline
