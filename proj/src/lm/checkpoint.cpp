#include "pkt/lm/checkpoint.hpp"

#include <fstream>

#include "pkt/core/binary_io.hpp"
#include "pkt/core/errors.hpp"
#include "pkt/core/fs.hpp"

namespace pkt::lm {

namespace {
constexpr char kMagic[4] = {'P', 'K', 'T', 'B'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::filesystem::path vocab_path(const std::filesystem::path& checkpoint) {
    return std::filesystem::path(checkpoint.string() + ".vocab.json");
}

void save_backbone(const std::filesystem::path& path, const BackboneModel& model) {
    fsutil::atomic_write(vocab_path(path), [&](std::ostream& out) { out << model.tokenizer().to_json().dump() << '\n'; });
    fsutil::atomic_write(path, [&](std::ostream& out) {
        out.write(kMagic, 4);
        binio::write_u32(out, kVersion);
        const BackboneConfig& c = model.config();
        for (std::uint32_t v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ffn, c.max_context})
            binio::write_u32(out, v);
        const Digest d = model.digest();
        out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size()));
        for (const Array* a : model.parameters()) binio::write_f64s(out, a->data());
    });
}

BackboneModel load_backbone(const std::filesystem::path& path) {
    const std::string what = "checkpoint " + path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError(what + ": cannot open");
    char magic[4];
    binio::read_exact(in, magic, 4, what);
    if (!std::equal(magic, magic + 4, kMagic)) throw DataError(what + ": bad magic (not a backbone checkpoint)");
    const std::uint32_t version = binio::read_u32(in, what);
    if (version != kVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
    BackboneConfig c;
    c.vocab_size = binio::read_u32(in, what);
    c.d_model = binio::read_u32(in, what);
    c.n_layers = binio::read_u32(in, what);
    c.n_heads = binio::read_u32(in, what);
    c.d_ffn = binio::read_u32(in, what);
    c.max_context = binio::read_u32(in, what);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(what + ": " + e.what());
    }
    Digest stored;
    binio::read_exact(in, reinterpret_cast<char*>(stored.data()), stored.size(), what);

    const auto vp = vocab_path(path);
    std::ifstream vin(vp);
    if (!vin) throw NotFoundError("vocabulary " + vp.string() + ": cannot open");
    nlohmann::json vj;
    try {
        vj = nlohmann::json::parse(vin);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("vocabulary " + vp.string() + ": " + e.what());
    }
    Tokenizer tok = Tokenizer::from_json(vj);
    if (tok.size() != c.vocab_size) {
        throw DataError(what + ": vocabulary has " + std::to_string(tok.size()) + " entries, checkpoint expects " +
                        std::to_string(c.vocab_size));
    }

    BackboneModel model(c, std::move(tok));
    for (NamedArray p : model.parameters()) binio::read_f64s(in, p.value->data(), what);
    if (in.peek() != std::char_traits<char>::eof()) throw DataError(what + ": trailing bytes after weights");
    if (model.digest() != stored) throw DataError(what + ": digest mismatch (weights or vocabulary altered)");
    return model;
}

}  // namespace pkt::lm
