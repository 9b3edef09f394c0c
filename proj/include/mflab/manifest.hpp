#pragma once

#include "mflab/error.hpp"
#include "mflab/field.hpp"

#include <openssl/evp.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace mflab {

inline constexpr const char* kToolVersion = "mflab 0.1.0";

/// Lower-case hex SHA-256 of a byte string.
inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::Io, "SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(detail::read_all(path)); }

struct FileDigest {
    std::string path;
    std::string sha256;
};

struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    std::string config_text;
    std::string config_hash;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string tool_version = kToolVersion;
    std::vector<FileDigest> input_digests;
    /// Output paths relative to the output directory, with digests.
    std::vector<FileDigest> outputs;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["argv"] = argv;
        j["config_hash"] = config_hash;
        j["config"] = config_text;
        j["seed"] = seed;
        j["threads"] = threads;
        j["tool_version"] = tool_version;
        j["input_digests"] = nlohmann::ordered_json::array();
        for (const auto& d : input_digests) j["input_digests"].push_back({{"path", d.path}, {"sha256", d.sha256}});
        j["outputs"] = nlohmann::ordered_json::array();
        for (const auto& d : outputs) j["outputs"].push_back({{"path", d.path}, {"sha256", d.sha256}});
        return j;
    }

    static RunManifest from_json(const nlohmann::ordered_json& j) {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.argv = j.at("argv").get<std::vector<std::string>>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.config_text = j.at("config").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.threads = j.at("threads").get<int>();
        m.tool_version = j.at("tool_version").get<std::string>();
        for (const auto& d : j.at("input_digests")) m.input_digests.push_back({d.at("path"), d.at("sha256")});
        for (const auto& d : j.at("outputs")) m.outputs.push_back({d.at("path"), d.at("sha256")});
        return m;
    }
};

/// Collects the files written by one command and emits manifest.json and
/// summary.txt into the output directory.
class OutputDir {
public:
    explicit OutputDir(std::string dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + dir_ + ": " + ec.message());
    }

    const std::string& dir() const { return dir_; }
    std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

    /// Writes text and registers it as an output.
    void text(const std::string& name, const std::string& content) {
        std::ofstream os(path(name), std::ios::binary);
        if (!os) throw Error(ErrorCode::Io, "cannot write " + path(name));
        os << content;
        os.close();
        add(name);
    }
    void field(const std::string& name, const VorticityField& f) {
        write_field(f, path(name));
        add(name);
    }
    /// Registers a file already written under the directory.
    void add(const std::string& name) { names_.push_back(name); }

    /// Writes summary.txt and manifest.json; returns the manifest.
    RunManifest finish(RunManifest m, const std::string& summary) {
        text("summary.txt", summary);
        for (const auto& n : names_) m.outputs.push_back({n, sha256_file(path(n))});
        std::ofstream os(path("manifest.json"), std::ios::binary);
        if (!os) throw Error(ErrorCode::Io, "cannot write manifest");
        os << m.to_json().dump(2) << "\n";
        return m;
    }

private:
    std::string dir_;
    std::vector<std::string> names_;
};

inline RunManifest read_manifest(const std::string& path) {
    try {
        return RunManifest::from_json(nlohmann::ordered_json::parse(detail::read_all(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Config, "malformed manifest " + path + ": " + e.what());
    }
}

} // namespace mflab
