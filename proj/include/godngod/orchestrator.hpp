#pragma once

// Joint execution of a breed: per step, one applicable rule is chosen among
// the live members and imposed on every live member; members that cannot
// execute it are deleted. The run yields N (joint steps), the mean breed
// size o2 and the intellectual dimension log_floor(o2)(N).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "godngod/error.hpp"
#include "godngod/machine.hpp"
#include "godngod/rng.hpp"
#include "godngod/util.hpp"

namespace godngod {

/// ln(n) / ln(k); empty for k = 1, where the base is meaningless.
inline std::optional<double> dimension(std::uint64_t n, std::uint64_t k) {
    if (n < 1 || k < 1) throw Error(ErrorKind::invalid_input, "dimension needs n >= 1 and k >= 1");
    if (k == 1) return std::nullopt;
    return std::log(static_cast<double>(n)) / std::log(static_cast<double>(k));
}

/// Ordered multiset of machines; duplicates are separate members.
struct Breed {
    std::vector<Machine> members;
    std::string name;

    std::size_t size() const noexcept { return members.size(); }

    std::vector<std::string> member_ids() const {
        std::vector<std::string> ids;
        ids.reserve(members.size());
        for (const auto& m : members) ids.push_back(m.id());
        return ids;
    }

    /// Resolves each reference against pool by id, then by display name.
    static Breed resolve(std::span<const std::string> refs, std::span<const Machine> pool, std::string name = {}) {
        std::unordered_map<std::string, const Machine*> by_id;
        std::unordered_map<std::string, const Machine*> by_name;
        for (const auto& m : pool) {
            by_id.emplace(m.id(), &m);
            if (!m.name().empty()) by_name.emplace(m.name(), &m);
        }
        Breed b;
        b.name = std::move(name);
        for (const auto& ref : refs) {
            const Machine* found = nullptr;
            if (auto it = by_id.find(ref); it != by_id.end()) found = it->second;
            else if (auto jt = by_name.find(ref); jt != by_name.end()) found = jt->second;
            if (!found) throw Error(ErrorKind::invalid_input, "unresolvable machine reference '" + ref + "'");
            b.members.push_back(*found);
        }
        if (b.members.empty()) throw Error(ErrorKind::invalid_input, "breed has no members");
        return b;
    }

    bool operator==(const Breed& o) const { return members == o.members; }
};

/// Which members may execute the chosen rule.
///
/// matching_configuration: every live member whose (state, scanned symbol)
/// equals the rule's left-hand side executes it, whatever its own table
/// says. own_table: a member must additionally hold exactly that rule in its
/// own table; members that do not are deleted.
enum class ExecutionPolicy { matching_configuration, own_table };

inline const char* to_string(ExecutionPolicy p) noexcept {
    return p == ExecutionPolicy::own_table ? "own-table" : "matching-configuration";
}

inline ExecutionPolicy execution_policy_from_string(std::string_view s) {
    if (s == "matching-configuration") return ExecutionPolicy::matching_configuration;
    if (s == "own-table") return ExecutionPolicy::own_table;
    throw Error(ErrorKind::invalid_input, "unknown execution policy '" + std::string(s) + "'");
}

enum class Termination { all_resolved, no_applicable_rule, budget_exceeded };

inline const char* to_string(Termination t) noexcept {
    switch (t) {
        case Termination::all_resolved: return "all-resolved";
        case Termination::no_applicable_rule: return "no-applicable-rule";
        case Termination::budget_exceeded: return "budget-exceeded";
    }
    return "unknown";
}

inline Termination termination_from_string(std::string_view s) {
    if (s == "all-resolved") return Termination::all_resolved;
    if (s == "no-applicable-rule") return Termination::no_applicable_rule;
    if (s == "budget-exceeded") return Termination::budget_exceeded;
    throw Error(ErrorKind::invalid_input, "unknown termination '" + std::string(s) + "'");
}

struct RunResult {
    std::uint64_t n_steps = 0;
    double o2_mean = 0.0;
    std::uint64_t o2_floor = 0;
    std::optional<double> dimension;
    std::vector<std::uint64_t> selection_counts;
    Termination termination = Termination::all_resolved;
    std::uint64_t seed = 0;
    std::vector<std::size_t> halted_members;
    std::vector<std::size_t> deleted_members;

    bool terminated() const noexcept { return termination != Termination::budget_exceeded; }

    bool operator==(const RunResult&) const = default;
};

/// Equality of everything except the seed the run was sampled with.
inline bool same_outcome(const RunResult& a, const RunResult& b) {
    RunResult x = a;
    x.seed = b.seed;
    return x == b;
}

/// Stepwise orchestration state. orchestrate() drives it with a seeded
/// choice per step; enumerate_runs() forks it at every choice.
class Orchestration {
public:
    Orchestration(const Breed& breed, std::uint64_t max_steps, ExecutionPolicy policy = ExecutionPolicy::matching_configuration)
        : breed_(&breed), max_steps_(max_steps), policy_(policy) {
        if (breed.members.empty()) throw Error(ErrorKind::invalid_input, "breed has no members");
        if (max_steps < 1) throw Error(ErrorKind::invalid_input, "max_steps must be at least 1");
        live_.reserve(breed.members.size());
        for (std::size_t i = 0; i < breed.members.size(); ++i) live_.push_back({i, Configuration{}});
        counts_.assign(breed.members.size(), 0);
    }

    /// Retires halted members and decides whether the run is over. When it
    /// is not, fills `proposers` with the member indices able to propose.
    std::optional<Termination> advance(std::vector<std::size_t>& proposers) {
        std::erase_if(live_, [this](const Live& l) {
            if (l.config.state != 0) return false;
            halted_.push_back(l.member);
            return true;
        });
        if (live_.empty()) return finish(Termination::all_resolved);
        proposers.clear();
        for (const Live& l : live_)
            if (breed_->members[l.member].action(l.config.state, l.config.scanned())) proposers.push_back(l.member);
        if (proposers.empty()) return finish(Termination::no_applicable_rule);
        if (steps_ == max_steps_) return finish(Termination::budget_exceeded);
        return std::nullopt;
    }

    /// Imposes the rule proposed by `member` on the whole live breed.
    void choose(std::size_t member) {
        const Live* chooser = nullptr;
        for (const Live& l : live_)
            if (l.member == member) chooser = &l;
        if (!chooser) throw Error(ErrorKind::invalid_input, "chosen member is not live");
        const int state = chooser->config.state;
        const Symbol symbol = chooser->config.scanned();
        const auto& act = breed_->members[member].action(state, symbol);
        if (!act) throw Error(ErrorKind::invalid_input, "chosen member has no applicable rule");
        const Action rule = *act;
        const std::optional<Action> proposed = rule;

        size_sum_ += live_.size();
        ++counts_[member];
        ++steps_;
        std::erase_if(live_, [&](Live& l) {
            const bool can_execute = l.config.state == state && l.config.scanned() == symbol &&
                                     (policy_ == ExecutionPolicy::matching_configuration ||
                                      breed_->members[l.member].action(state, symbol) == proposed);
            if (!can_execute) {
                deleted_.push_back(l.member);
                return true;
            }
            l.config.apply(rule);
            return false;
        });
    }

    std::uint64_t steps() const noexcept { return steps_; }
    std::size_t live_count() const noexcept { return live_.size(); }

    /// Control states of the live members, in member order.
    std::vector<int> live_states() const {
        std::vector<int> out;
        for (const Live& l : live_) out.push_back(l.config.state);
        return out;
    }

    std::optional<Termination> termination() const noexcept { return termination_; }

    RunResult result(std::uint64_t seed) const {
        if (!termination_) throw Error(ErrorKind::server, "orchestration has not terminated");
        RunResult r;
        r.n_steps = steps_;
        r.selection_counts = counts_;
        r.termination = *termination_;
        r.seed = seed;
        r.halted_members = halted_;
        r.deleted_members = deleted_;
        if (steps_ > 0) {
            r.o2_mean = static_cast<double>(size_sum_) / static_cast<double>(steps_);
            r.o2_floor = size_sum_ / steps_;
            if (r.o2_floor >= 2) r.dimension = dimension(steps_, r.o2_floor);
        }
        return r;
    }

private:
    struct Live {
        std::size_t member;
        Configuration config;
    };

    Termination finish(Termination t) {
        termination_ = t;
        return t;
    }

    const Breed* breed_;
    std::uint64_t max_steps_;
    ExecutionPolicy policy_;
    std::vector<Live> live_;
    std::vector<std::uint64_t> counts_;
    std::vector<std::size_t> halted_;
    std::vector<std::size_t> deleted_;
    std::uint64_t steps_ = 0;
    std::uint64_t size_sum_ = 0;
    std::optional<Termination> termination_;
};

/// Pure function of (breed, seed, max_steps). The chooser is drawn uniformly
/// among the live members that have an applicable rule.
inline RunResult orchestrate(const Breed& breed, std::uint64_t seed, std::uint64_t max_steps,
                             ExecutionPolicy policy = ExecutionPolicy::matching_configuration) {
    Orchestration orch(breed, max_steps, policy);
    Rng rng(seed);
    std::vector<std::size_t> proposers;
    while (!orch.advance(proposers)) {
        const std::size_t pick = proposers.size() == 1 ? 0 : static_cast<std::size_t>(rng.below(proposers.size()));
        orch.choose(proposers[pick]);
    }
    return orch.result(seed);
}

struct EnumeratedRun {
    std::vector<std::size_t> choices;  // chosen member index per step
    RunResult result;                  // seed is 0
};

inline constexpr std::uint64_t kEnumerationLimit = 1'000'000;

/// Every selection sequence of the orchestration, depth-first in member
/// order. Refuses instances where size^max_steps exceeds the limit.
inline std::vector<EnumeratedRun> enumerate_runs(const Breed& breed, std::uint64_t max_steps,
                                                 ExecutionPolicy policy = ExecutionPolicy::matching_configuration) {
    if (breed.members.empty()) throw Error(ErrorKind::invalid_input, "breed has no members");
    if (max_steps < 1) throw Error(ErrorKind::invalid_input, "max_steps must be at least 1");
    if (breed.size() > 1) {
        double bound = 1.0;
        for (std::uint64_t i = 0; i < max_steps; ++i) {
            bound *= static_cast<double>(breed.size());
            if (bound > static_cast<double>(kEnumerationLimit))
                throw Error(ErrorKind::invalid_input, "enumeration bound exceeded: " + std::to_string(breed.size()) + "^" +
                                                          std::to_string(max_steps) + " > 10^6");
        }
    }

    struct Frame {
        Orchestration orch;
        std::vector<std::size_t> choices;
    };
    std::vector<EnumeratedRun> out;
    std::vector<Frame> stack;
    stack.push_back({Orchestration(breed, max_steps, policy), {}});
    std::vector<std::size_t> proposers;
    while (!stack.empty()) {
        Frame frame = std::move(stack.back());
        stack.pop_back();
        if (frame.orch.advance(proposers)) {
            out.push_back({std::move(frame.choices), frame.orch.result(0)});
            continue;
        }
        // Push in reverse so the lowest member index is explored first.
        for (auto it = proposers.rbegin(); it != proposers.rend(); ++it) {
            Frame child{frame.orch, frame.choices};
            child.orch.choose(*it);
            child.choices.push_back(*it);
            stack.push_back(std::move(child));
        }
    }
    return out;
}

// --- documents -------------------------------------------------------------

inline nlohmann::json breed_to_json(const Breed& breed) {
    nlohmann::json machines = nlohmann::json::array();
    std::vector<std::string> seen;
    for (const auto& m : breed.members) {
        if (std::find(seen.begin(), seen.end(), m.id()) != seen.end()) continue;
        seen.push_back(m.id());
        machines.push_back(machine_to_json(m));
    }
    nlohmann::json j;
    if (!breed.name.empty()) j["name"] = breed.name;
    j["machines"] = std::move(machines);
    j["members"] = breed.member_ids();
    return j;
}

/// Breed document: {"name"?, "pool"?: path, "machines"?: [...], "members": [refs]}.
/// A relative pool path is resolved against base_dir.
inline Breed breed_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
    if (!doc.is_object()) throw Error(ErrorKind::invalid_input, "breed document must be an object");
    std::vector<Machine> pool;
    if (doc.contains("machines")) pool = machines_from_json(doc.at("machines"));
    if (doc.contains("pool")) {
        std::filesystem::path p = doc.at("pool").get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        auto more = load_machine_collection(p.string());
        pool.insert(pool.end(), more.begin(), more.end());
    }
    if (!doc.contains("members") || !doc["members"].is_array())
        throw Error(ErrorKind::invalid_input, "breed document lacks 'members'");
    auto refs = doc["members"].get<std::vector<std::string>>();
    return Breed::resolve(refs, pool, doc.value("name", std::string{}));
}

inline Breed load_breed(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::invalid_input, path + ": " + e.what());
    }
    return breed_from_json(doc, std::filesystem::path(path).parent_path());
}

inline nlohmann::json run_result_to_json(const RunResult& r) {
    nlohmann::json j;
    j["n_steps"] = r.n_steps;
    j["o2_mean"] = r.o2_mean;
    j["o2_floor"] = r.o2_floor;
    j["dimension"] = r.dimension ? nlohmann::json(*r.dimension) : nlohmann::json(nullptr);
    j["selection_counts"] = r.selection_counts;
    j["termination"] = to_string(r.termination);
    j["seed"] = r.seed;
    j["halted_members"] = r.halted_members;
    j["deleted_members"] = r.deleted_members;
    return j;
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
    RunResult r;
    r.n_steps = j.at("n_steps").get<std::uint64_t>();
    r.o2_mean = j.at("o2_mean").get<double>();
    r.o2_floor = j.at("o2_floor").get<std::uint64_t>();
    if (!j.at("dimension").is_null()) r.dimension = j["dimension"].get<double>();
    r.selection_counts = j.at("selection_counts").get<std::vector<std::uint64_t>>();
    r.termination = termination_from_string(j.at("termination").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.halted_members = j.value("halted_members", std::vector<std::size_t>{});
    r.deleted_members = j.value("deleted_members", std::vector<std::size_t>{});
    return r;
}

inline constexpr std::string_view kRunCsvHeader = "seed,n_steps,o2_mean,o2_floor,dimension,termination\n";

inline std::string run_csv_row(const RunResult& r) {
    std::string row = std::to_string(r.seed) + "," + std::to_string(r.n_steps) + "," + format_double(r.o2_mean) + "," +
                      std::to_string(r.o2_floor) + ",";
    if (r.dimension) row += format_double(*r.dimension);
    row += ",";
    row += to_string(r.termination);
    row += "\n";
    return row;
}

inline std::string runs_to_csv(std::span<const RunResult> runs) {
    std::string out(kRunCsvHeader);
    for (const auto& r : runs) out += run_csv_row(r);
    return out;
}

}  // namespace godngod
