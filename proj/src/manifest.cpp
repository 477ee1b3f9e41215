#include "intentscope/manifest.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

namespace intentscope {

namespace fs = std::filesystem;

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("cannot initialise SHA-256");
        }
    }
    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("SHA-256 update failed");
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw std::runtime_error("SHA-256 final failed");
        static const char* digits = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 15]);
        }
        return out;
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

nlohmann::json digests_to_json(const std::vector<ArtifactDigest>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& d : v) a.push_back({{"path", d.path}, {"sha256", d.sha256}});
    return a;
}

std::vector<ArtifactDigest> digests_from_json(const nlohmann::json& j) {
    std::vector<ArtifactDigest> v;
    for (const auto& d : j) v.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
    return v;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

const StageRecord* RunManifest::producer(const std::string& path) const {
    for (const auto& [name, rec] : stages) {
        for (const auto& o : rec.outputs) {
            if (o.path == path) return &rec;
        }
    }
    return nullptr;
}

nlohmann::json to_json(const RunManifest& m) {
    nlohmann::json stages = nlohmann::json::object();
    for (const auto& [name, rec] : m.stages) {
        stages[name] = {{"seed", rec.seed},
                        {"config_sha256", rec.config_sha256},
                        {"inputs", digests_to_json(rec.inputs)},
                        {"outputs", digests_to_json(rec.outputs)}};
    }
    return {{"tool_version", m.tool_version},
            {"config_sha256", m.config_sha256},
            {"master_seed", m.master_seed},
            {"stages", stages}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
    RunManifest m;
    m.tool_version = j.value("tool_version", std::string());
    m.config_sha256 = j.value("config_sha256", std::string());
    m.master_seed = j.value("master_seed", uint64_t{0});
    if (j.contains("stages")) {
        for (const auto& [name, s] : j.at("stages").items()) {
            StageRecord rec;
            rec.stage = name;
            rec.seed = s.value("seed", uint64_t{0});
            rec.config_sha256 = s.value("config_sha256", std::string());
            rec.inputs = digests_from_json(s.at("inputs"));
            rec.outputs = digests_from_json(s.at("outputs"));
            m.stages[name] = std::move(rec);
        }
    }
    return m;
}

RunManifest read_manifest(const fs::path& path) {
    if (!fs::exists(path)) return {};
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return manifest_from_json(j);
}

void write_manifest(const fs::path& path, const RunManifest& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(m).dump(2) << '\n';
}

ArtifactDigest verify_artifact(const RunManifest& m, const fs::path& root, const std::string& rel) {
    const StageRecord* rec = m.producer(rel);
    const fs::path full = root / rel;
    if (!rec) {
        throw MissingArtifact("artifact " + rel + " was not produced by any recorded stage in " + root.string() +
                              "; run its upstream stage first");
    }
    if (!fs::exists(full)) {
        throw MissingArtifact("artifact " + rel + " recorded by stage '" + rec->stage + "' is missing; rerun '" +
                              rec->stage + "'");
    }
    std::string expected;
    for (const auto& o : rec->outputs) {
        if (o.path == rel) expected = o.sha256;
    }
    const std::string actual = sha256_file(full);
    if (actual != expected) {
        throw DigestMismatch("refusing to run: " + rel + " changed after stage '" + rec->stage + "' wrote it (recorded " +
                             expected.substr(0, 12) + ", found " + actual.substr(0, 12) + "); rerun '" + rec->stage +
                             "' or restore the file");
    }
    return {rel, actual};
}

}  // namespace intentscope
