#pragma once

#include <csicl/detail/time.hpp>
#include <csicl/error.hpp>

#include <json.hpp>

#include <array>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

namespace csicl::llm {

/// One file per entry, named by the request's hex digest. The file holds
/// {"created_at": ..., "request": <canonical request>, "response": ...}.
///
/// Readers never block. Writers take a lock striped by digest and publish via
/// rename, so a reader sees either no file or a complete one.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir, bool read_only = false)
        : dir_(std::move(dir)), read_only_(read_only) {
        if (!read_only_) {
            std::filesystem::create_directories(dir_);
        }
    }

    const std::filesystem::path& dir() const noexcept { return dir_; }
    bool read_only() const noexcept { return read_only_; }

    std::filesystem::path path_for(const std::string& digest) const { return dir_ / digest; }

    /// Returns the stored entry, or nullopt when absent.
    std::optional<nlohmann::json> lookup(const std::string& digest) const {
        std::ifstream in(path_for(digest), std::ios::binary);
        if (!in) return std::nullopt;
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError("corrupt cache entry " + path_for(digest).string() + ": " + e.what());
        }
    }

    /// Writes an entry and returns it. created_at is stamped when missing.
    nlohmann::json store(const std::string& digest, const nlohmann::json& request, nlohmann::json response) {
        if (read_only_) {
            throw PreconditionError("cache " + dir_.string() + " is read-only");
        }
        std::string created = response.is_object() ? response.value("created_at", std::string{}) : std::string{};
        if (created.empty()) {
            created = detail::utc_timestamp();
            if (response.is_object()) response["created_at"] = created;
        }
        nlohmann::json entry = {{"created_at", created}, {"request", request}, {"response", std::move(response)}};
        std::ostringstream tid;
        tid << std::this_thread::get_id();
        const auto tmp = dir_ / (digest + ".tmp." + tid.str());
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error("cannot write cache entry " + tmp.string());
            out << entry.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path_for(digest));
        return entry;
    }

    /// Lock serializing writers of one key.
    std::mutex& writer_lock(const std::string& digest) {
        return stripes_[std::hash<std::string>{}(digest) % stripes_.size()];
    }

private:
    std::filesystem::path dir_;
    bool read_only_;
    std::array<std::mutex, 64> stripes_;
};

} // namespace csicl::llm
