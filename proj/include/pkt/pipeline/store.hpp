#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pkt/core/digest.hpp"
#include "pkt/lm/model.hpp"

namespace pkt::pipeline {

/// Deployed prefix file: magic "PKTP", u32 version, 32-byte backbone digest,
/// u32 n_layers, length, d_model, then activations as f64 LE ordered
/// [layer][key, value][position][dim].
void write_prefix_file(const std::filesystem::path& path, const lm::DeployedPrefix& prefix);
lm::DeployedPrefix read_prefix_file(const std::filesystem::path& path);

/// Reparametrized training state ("PKTR"): digest, dims, hidden width, then
/// embedding, w_in, b_in, w_out, b_out as f64 LE. Only used to initialize
/// stage-two training from a stored source prefix.
void write_reparam_file(const std::filesystem::path& path, const lm::PrefixParams& prefix);
lm::PrefixParams read_reparam_file(const std::filesystem::path& path);

/// Directory of prefixes for one backbone, keyed by persona id plus the
/// reserved key "source". Each entry is <key>.pktp (deployed activations),
/// <key>.json (metadata) and optionally <key>.reparam.bin. store.json records
/// the backbone digest. Writes to one key are serialized within the process
/// and land via rename; the last writer wins and bumps the entry's revision.
class PrefixStore {
   public:
    static constexpr const char* kSourceKey = "source";

    /// Opens or creates the store. Throws DataError if it belongs to another backbone.
    PrefixStore(std::filesystem::path dir, const Digest& backbone_digest);

    /// Stores deploy(prefix) and its metadata; with keep_reparam also the
    /// training state. Throws DataError on a digest mismatch or a bad key.
    void put(const std::string& key, const lm::PrefixParams& prefix, nlohmann::json metadata,
             bool keep_reparam = false);
    void put_deployed(const std::string& key, const lm::DeployedPrefix& prefix, nlohmann::json metadata);

    /// Throws NotFoundError for an unknown key, DataError for a digest mismatch.
    lm::DeployedPrefix load(const std::string& key) const;
    lm::PrefixParams load_reparam(const std::string& key) const;
    nlohmann::json metadata(const std::string& key) const;

    bool contains(const std::string& key) const;
    std::vector<std::string> keys() const;  // sorted
    std::size_t total_floats() const;

    const std::filesystem::path& dir() const { return dir_; }

   private:
    std::filesystem::path entry(const std::string& key, const char* suffix) const;
    void check_key(const std::string& key) const;

    std::filesystem::path dir_;
    Digest digest_;
};

}  // namespace pkt::pipeline
