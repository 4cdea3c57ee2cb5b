#pragma once

// Specimen catalog: verified breed runs stored one document per specimen
// under <root>/specimens/<id>.json with a rebuildable <root>/index.json.
// Deletion is a status tombstone; files are never removed.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "godngod/error.hpp"
#include "godngod/machine.hpp"
#include "godngod/orchestrator.hpp"
#include "godngod/rng.hpp"
#include "godngod/util.hpp"

namespace godngod {

inline constexpr std::string_view kSpecimenFormat = "godngod-specimen/1";

enum class SpecimenStatus { active, flagged_infinite, deleted };

inline const char* to_string(SpecimenStatus s) noexcept {
    switch (s) {
        case SpecimenStatus::active: return "active";
        case SpecimenStatus::flagged_infinite: return "flagged_infinite";
        case SpecimenStatus::deleted: return "deleted";
    }
    return "unknown";
}

inline SpecimenStatus status_from_string(std::string_view s) {
    if (s == "active") return SpecimenStatus::active;
    if (s == "flagged_infinite") return SpecimenStatus::flagged_infinite;
    if (s == "deleted") return SpecimenStatus::deleted;
    throw Error(ErrorKind::invalid_input, "unknown specimen status '" + std::string(s) + "'");
}

/// active -> {flagged_infinite, deleted}, flagged_infinite -> deleted.
/// Re-applying the current status is a no-op.
inline bool transition_allowed(SpecimenStatus from, SpecimenStatus to) noexcept {
    if (from == to) return true;
    if (from == SpecimenStatus::active) return true;
    return from == SpecimenStatus::flagged_infinite && to == SpecimenStatus::deleted;
}

struct Location {
    double latitude = 0.0;
    double longitude = 0.0;

    bool operator==(const Location&) const = default;
};

inline void check_location(const Location& loc) {
    if (!(loc.latitude >= -90.0 && loc.latitude <= 90.0)) throw Error(ErrorKind::invalid_input, "latitude out of [-90, 90]");
    if (!(loc.longitude >= -180.0 && loc.longitude <= 180.0))
        throw Error(ErrorKind::invalid_input, "longitude out of [-180, 180]");
}

struct SpecimenMachine {
    std::string id;
    std::string name;
    std::string text;  // canonical
    std::uint64_t selection_count = 0;

    bool operator==(const SpecimenMachine&) const = default;
};

struct Specimen {
    std::string id;
    std::string fancy_name;
    std::optional<double> dimension;
    std::uint64_t n_steps = 0;
    double o2_mean = 0.0;
    std::uint64_t o2_floor = 0;
    std::string observer;
    std::optional<Location> location;
    std::vector<SpecimenMachine> machines;
    std::uint64_t seed = 0;
    std::string found_at;  // ISO 8601, UTC
    SpecimenStatus status = SpecimenStatus::active;

    bool operator==(const Specimen&) const = default;

    Breed breed() const {
        Breed b;
        for (const auto& m : machines) b.members.push_back(parse_machine(m.text, m.name));
        return b;
    }

    std::vector<std::uint64_t> selection_counts() const {
        std::vector<std::uint64_t> out;
        for (const auto& m : machines) out.push_back(m.selection_count);
        return out;
    }
};

/// Content address of a (breed, seed) pair.
inline std::string specimen_id(const Breed& breed, std::uint64_t seed) {
    std::string text(kSpecimenFormat);
    text += "\nseed " + std::to_string(seed) + "\n";
    for (const auto& m : breed.members) {
        text += "--\n";
        text += m.canonical_text();
    }
    return content_hash(text);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Deterministic binomial name, e.g. "Turingus breedi".
inline std::string fancy_name(std::string_view id) {
    static constexpr std::string_view syllables[] = {
        "tu", "rin", "bre", "ed", "mar", "xen", "bun", "tro", "ka", "lo", "mi", "no", "pe", "qua", "ra", "si",
        "te", "ur", "vi", "zel", "bar", "cor", "del", "fer", "gil", "hor", "lum", "pan", "sca", "dor", "nix", "ot"};
    static constexpr std::string_view suffixes[] = {"us", "i", "a", "um"};
    constexpr std::uint64_t ns = std::size(syllables);
    constexpr std::uint64_t nx = std::size(suffixes);

    // FNV-1a over the whole id so any id string works, hex or not.
    std::uint64_t state = 0xcbf29ce484222325ULL;
    for (char c : id) state = (state ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    Rng rng(state);

    auto word = [&](std::size_t parts) {
        std::string w;
        for (std::size_t i = 0; i < parts; ++i) w += syllables[rng.below(ns)];
        w += suffixes[rng.below(nx)];
        return w;
    };
    std::string genus = word(2);
    std::string species = word(2);
    genus[0] = static_cast<char>(genus[0] - 'a' + 'A');
    return genus + " " + species;
}

/// Fills a specimen from a run of `breed`. Budget-exceeded runs are
/// recorded flagged infinite.
inline Specimen make_specimen(const RunResult& run, const Breed& breed, std::string observer,
                              std::optional<Location> location, std::string found_at = utc_timestamp()) {
    if (run.selection_counts.size() != breed.size())
        throw Error(ErrorKind::invalid_input, "run has " + std::to_string(run.selection_counts.size()) +
                                                  " selection counts for a breed of " + std::to_string(breed.size()));
    if (location) check_location(*location);
    Specimen s;
    s.id = specimen_id(breed, run.seed);
    s.fancy_name = fancy_name(s.id);
    s.dimension = run.dimension;
    s.n_steps = run.n_steps;
    s.o2_mean = run.o2_mean;
    s.o2_floor = run.o2_floor;
    s.observer = std::move(observer);
    s.location = location;
    for (std::size_t i = 0; i < breed.size(); ++i)
        s.machines.push_back({breed.members[i].id(), breed.members[i].name(), breed.members[i].canonical_text(), run.selection_counts[i]});
    s.seed = run.seed;
    s.found_at = std::move(found_at);
    s.status = run.termination == Termination::budget_exceeded ? SpecimenStatus::flagged_infinite : SpecimenStatus::active;
    return s;
}

struct Revalidation {
    bool ok = false;
    RunResult reproduced;
    std::string message;
};

/// Replays (machines, seed). A terminated claim must reproduce n_steps and
/// the selection counts under a budget of n_steps + 1; a budget-exceeded
/// claim must exhaust a budget of exactly n_steps with the same counts.
inline Revalidation revalidate(const Breed& breed, std::uint64_t seed, std::uint64_t claimed_n_steps,
                               std::span<const std::uint64_t> claimed_counts, bool claimed_infinite) {
    Revalidation v;
    if (claimed_infinite && claimed_n_steps == 0) {
        v.message = "flagged-infinite claim with zero steps";
        return v;
    }
    v.reproduced = orchestrate(breed, seed, claimed_infinite ? claimed_n_steps : claimed_n_steps + 1);
    const auto& r = v.reproduced;
    if (r.n_steps != claimed_n_steps) {
        v.message = "claimed n_steps " + std::to_string(claimed_n_steps) + " but replay gives " + std::to_string(r.n_steps);
        return v;
    }
    if (claimed_infinite != !r.terminated()) {
        v.message = std::string("claimed termination does not reproduce (replay: ") + to_string(r.termination) + ")";
        return v;
    }
    if (!std::equal(claimed_counts.begin(), claimed_counts.end(), r.selection_counts.begin(), r.selection_counts.end())) {
        v.message = "selection counts do not reproduce";
        return v;
    }
    v.ok = true;
    return v;
}

inline Revalidation revalidate(const Specimen& s) {
    const auto counts = s.selection_counts();
    return revalidate(s.breed(), s.seed, s.n_steps, counts, s.status == SpecimenStatus::flagged_infinite);
}

// --- documents -------------------------------------------------------------

inline nlohmann::json specimen_to_json(const Specimen& s) {
    nlohmann::json machines = nlohmann::json::array();
    for (const auto& m : s.machines)
        machines.push_back({{"id", m.id}, {"name", m.name}, {"text", m.text}, {"selection_count", m.selection_count}});
    nlohmann::json j;
    j["format"] = kSpecimenFormat;
    j["id"] = s.id;
    j["fancy_name"] = s.fancy_name;
    j["dimension"] = s.dimension ? nlohmann::json(*s.dimension) : nlohmann::json(nullptr);
    j["n_steps"] = s.n_steps;
    j["o2_mean"] = s.o2_mean;
    j["o2_floor"] = s.o2_floor;
    j["observer"] = s.observer;
    j["location"] = s.location ? nlohmann::json{{"latitude", s.location->latitude}, {"longitude", s.location->longitude}}
                               : nlohmann::json(nullptr);
    j["machines"] = std::move(machines);
    j["seed"] = s.seed;
    j["found_at"] = s.found_at;
    j["status"] = to_string(s.status);
    return j;
}

inline std::optional<Location> location_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    Location loc{j.at("latitude").get<double>(), j.at("longitude").get<double>()};
    check_location(loc);
    return loc;
}

inline Specimen specimen_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string{}) != kSpecimenFormat)
            throw Error(ErrorKind::invalid_input, "not a " + std::string(kSpecimenFormat) + " document");
        Specimen s;
        s.id = j.at("id").get<std::string>();
        s.fancy_name = j.at("fancy_name").get<std::string>();
        if (!j.at("dimension").is_null()) s.dimension = j["dimension"].get<double>();
        s.n_steps = j.at("n_steps").get<std::uint64_t>();
        s.o2_mean = j.at("o2_mean").get<double>();
        s.o2_floor = j.at("o2_floor").get<std::uint64_t>();
        s.observer = j.at("observer").get<std::string>();
        s.location = location_from_json(j.value("location", nlohmann::json(nullptr)));
        for (const auto& m : j.at("machines"))
            s.machines.push_back({m.at("id").get<std::string>(), m.value("name", std::string{}), m.at("text").get<std::string>(),
                                  m.at("selection_count").get<std::uint64_t>()});
        s.seed = j.at("seed").get<std::uint64_t>();
        s.found_at = j.at("found_at").get<std::string>();
        s.status = status_from_string(j.at("status").get<std::string>());
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid_input, std::string("specimen document: ") + e.what());
    }
}

inline constexpr std::string_view kSpecimenCsvHeader = "id,fancy_name,dimension,n_steps,o2_mean,o2_floor,observer,seed,found_at,status\n";

inline std::string specimens_to_csv(std::span<const Specimen> specimens) {
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + "\"";
    };
    std::string out(kSpecimenCsvHeader);
    for (const auto& s : specimens) {
        out += s.id + "," + quote(s.fancy_name) + "," + (s.dimension ? format_double(*s.dimension) : "") + "," +
               std::to_string(s.n_steps) + "," + format_double(s.o2_mean) + "," + std::to_string(s.o2_floor) + "," +
               quote(s.observer) + "," + std::to_string(s.seed) + "," + s.found_at + "," + to_string(s.status) + "\n";
    }
    return out;
}

// --- store -----------------------------------------------------------------

enum class SortKey { dimension, n_steps, found_at };

inline SortKey sort_key_from_string(std::string_view s) {
    if (s == "dimension") return SortKey::dimension;
    if (s == "n_steps") return SortKey::n_steps;
    if (s == "found_at") return SortKey::found_at;
    throw Error(ErrorKind::invalid_input, "unknown sort key '" + std::string(s) + "'");
}

struct ListQuery {
    std::optional<SpecimenStatus> status;  // exact status filter
    bool include_deleted = false;          // without a status filter
    SortKey sort = SortKey::dimension;
    bool descending = true;
    std::size_t offset = 0;
    std::size_t limit = std::numeric_limits<std::size_t>::max();
};

class CatalogStore {
public:
    explicit CatalogStore(std::filesystem::path root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(specimen_dir(), ec);
        if (ec) throw Error(ErrorKind::io, "cannot create catalog at " + root_.string() + ": " + ec.message());
        std::unique_lock lock(mutex_);
        rebuild_locked();
    }

    const std::filesystem::path& root() const noexcept { return root_; }

    /// Durable upsert.
    void save(const Specimen& s) {
        if (s.id.empty()) throw Error(ErrorKind::invalid_input, "specimen without id");
        std::unique_lock lock(mutex_);
        persist_locked(s);
    }

    std::optional<Specimen> find(const std::string& id) const {
        std::shared_lock lock(mutex_);
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    Specimen get(const std::string& id) const {
        auto s = find(id);
        if (!s) throw Error(ErrorKind::not_found, "unknown specimen '" + id + "'");
        return *s;
    }

    std::vector<Specimen> list(const ListQuery& q = {}) const {
        std::vector<Specimen> out;
        {
            std::shared_lock lock(mutex_);
            for (const auto& [id, s] : index_) {
                if (q.status ? s.status != *q.status : (!q.include_deleted && s.status == SpecimenStatus::deleted)) continue;
                out.push_back(s);
            }
        }
        sort_specimens(out, q.sort, q.descending);
        if (q.offset >= out.size()) return {};
        out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(q.offset));
        if (out.size() > q.limit) out.resize(q.limit);
        return out;
    }

    Specimen set_status(const std::string& id, SpecimenStatus status) {
        std::unique_lock lock(mutex_);
        Specimen s = get_locked(id);
        if (!transition_allowed(s.status, status))
            throw Error(ErrorKind::conflict, std::string("status transition ") + to_string(s.status) + " -> " + to_string(status) +
                                                 " is not allowed");
        if (s.status == status) return s;
        s.status = status;
        persist_locked(s);
        return s;
    }

    Specimen rename(const std::string& id, std::string fancy_name) {
        if (fancy_name.empty() || fancy_name.size() > 128) throw Error(ErrorKind::invalid_input, "name must be 1..128 characters");
        std::unique_lock lock(mutex_);
        Specimen s = get_locked(id);
        s.fancy_name = std::move(fancy_name);
        persist_locked(s);
        return s;
    }

    /// Rescans the specimen directory and rewrites index.json.
    std::size_t rebuild_index() {
        std::unique_lock lock(mutex_);
        rebuild_locked();
        return index_.size();
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return index_.size();
    }

    /// Undefined dimensions sort after every defined one in either direction.
    static void sort_specimens(std::vector<Specimen>& v, SortKey key, bool descending) {
        std::stable_sort(v.begin(), v.end(), [&](const Specimen& a, const Specimen& b) {
            int c = 0;
            switch (key) {
                case SortKey::dimension:
                    if (a.dimension.has_value() != b.dimension.has_value()) return a.dimension.has_value();
                    if (a.dimension && *a.dimension != *b.dimension) c = *a.dimension < *b.dimension ? -1 : 1;
                    break;
                case SortKey::n_steps:
                    if (a.n_steps != b.n_steps) c = a.n_steps < b.n_steps ? -1 : 1;
                    break;
                case SortKey::found_at:
                    c = a.found_at.compare(b.found_at);
                    break;
            }
            if (c == 0) return a.id < b.id;
            return descending ? c > 0 : c < 0;
        });
    }

private:
    std::filesystem::path specimen_dir() const { return root_ / "specimens"; }

    Specimen get_locked(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw Error(ErrorKind::not_found, "unknown specimen '" + id + "'");
        return it->second;
    }

    void persist_locked(const Specimen& s) {
        atomic_write(specimen_dir() / (s.id + ".json"), specimen_to_json(s).dump(2) + "\n");
        index_[s.id] = s;
        write_index_locked();
    }

    void rebuild_locked() {
        index_.clear();
        for (const auto& entry : std::filesystem::directory_iterator(specimen_dir())) {
            if (entry.path().extension() != ".json") continue;
            Specimen s;
            try {
                s = specimen_from_json(nlohmann::json::parse(read_file(entry.path().string())));
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorKind::io, "corrupt specimen " + entry.path().string() + ": " + e.what());
            } catch (const Error& e) {
                throw Error(ErrorKind::io, "corrupt specimen " + entry.path().string() + ": " + e.what());
            }
            if (s.id + ".json" != entry.path().filename().string())
                throw Error(ErrorKind::io, "specimen file name does not match id: " + entry.path().string());
            index_.emplace(s.id, std::move(s));
        }
        write_index_locked();
    }

    void write_index_locked() {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [id, s] : index_)
            arr.push_back({{"id", id},
                           {"status", to_string(s.status)},
                           {"dimension", s.dimension ? nlohmann::json(*s.dimension) : nlohmann::json(nullptr)},
                           {"n_steps", s.n_steps},
                           {"found_at", s.found_at}});
        atomic_write(root_ / "index.json", nlohmann::json{{"format", "godngod-index/1"}, {"specimens", std::move(arr)}}.dump(1) + "\n");
    }

    /// tmp + fsync + rename, then fsync the directory.
    static void atomic_write(const std::filesystem::path& path, const std::string& content) {
        const std::filesystem::path tmp = path.string() + ".tmp";
        const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd < 0) throw Error(ErrorKind::io, "cannot open " + tmp.string());
        std::size_t done = 0;
        while (done < content.size()) {
            const ssize_t n = ::write(fd, content.data() + done, content.size() - done);
            if (n < 0) {
                ::close(fd);
                throw Error(ErrorKind::io, "write failed: " + tmp.string());
            }
            done += static_cast<std::size_t>(n);
        }
        if (::fsync(fd) != 0 || ::close(fd) != 0) throw Error(ErrorKind::io, "fsync failed: " + tmp.string());
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw Error(ErrorKind::io, "rename failed: " + path.string() + ": " + ec.message());
        const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY);
        if (dfd >= 0) {
            ::fsync(dfd);
            ::close(dfd);
        }
    }

    std::filesystem::path root_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, Specimen> index_;
};

}  // namespace godngod
