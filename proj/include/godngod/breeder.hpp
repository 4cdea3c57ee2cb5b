#pragma once

// Machine pools and the evolutionary search for high-dimension breeds.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "godngod/error.hpp"
#include "godngod/machine.hpp"
#include "godngod/orchestrator.hpp"
#include "godngod/rng.hpp"
#include "godngod/util.hpp"

namespace godngod {

enum class Provenance { curated, random };

inline const char* to_string(Provenance p) noexcept { return p == Provenance::curated ? "curated" : "random"; }

struct PoolEntry {
    Machine machine;
    Provenance provenance = Provenance::random;
};

/// Random members are verified to halt solo within budget_used steps.
/// The same random table can be drawn twice; equal tables share an id, so
/// id resolution stays unambiguous.
struct Pool {
    std::vector<PoolEntry> entries;
    std::uint64_t budget_used = 0;
    int n_states = 0;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return entries.size(); }

    std::vector<Machine> machines() const {
        std::vector<Machine> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.machine);
        return out;
    }
};

struct PoolOptions {
    int n_states = 2;
    std::size_t target_count = 500;
    std::uint64_t budget = 100'000;
    std::uint64_t seed = 0;
    std::uint64_t max_attempts = 0;  // 0 = 10000 + 1000 * target_count
    unsigned threads = 0;
};

/// Draws random machines in seed order, keeping the ones that halt solo
/// within the budget, then appends the curated machines unverified.
inline Pool generate_pool(const PoolOptions& opt, std::span<const Machine> curated) {
    if (opt.budget < 1) throw Error(ErrorKind::invalid_input, "pool budget must be at least 1");
    if (opt.n_states < 1) throw Error(ErrorKind::invalid_input, "n_states must be at least 1");
    const std::uint64_t cap = opt.max_attempts ? opt.max_attempts : 10'000 + 1'000 * static_cast<std::uint64_t>(opt.target_count);

    Pool pool;
    pool.budget_used = opt.budget;
    pool.n_states = opt.n_states;
    pool.seed = opt.seed;

    Rng rng(opt.seed);
    std::uint64_t attempts = 0;
    constexpr std::size_t kBatch = 256;
    std::size_t accepted = 0;
    while (accepted < opt.target_count) {
        if (attempts >= cap)
            throw Error(ErrorKind::invalid_input, "pool target unreachable: " + std::to_string(accepted) + " of " +
                                                      std::to_string(opt.target_count) + " halting machines after " +
                                                      std::to_string(attempts) + " attempts");
        const std::size_t batch = static_cast<std::size_t>(std::min<std::uint64_t>(kBatch, cap - attempts));
        std::vector<Machine> candidates;
        candidates.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) candidates.push_back(random_machine(opt.n_states, rng));
        attempts += batch;
        std::vector<char> halts(batch, 0);
        parallel_for(batch, opt.threads, [&](std::size_t i) { halts[i] = run_single(candidates[i], opt.budget).halted; });
        for (std::size_t i = 0; i < batch && accepted < opt.target_count; ++i) {
            if (!halts[i]) continue;
            auto& m = candidates[i];
            m.set_name("r" + std::to_string(accepted));
            pool.entries.push_back({std::move(m), Provenance::random});
            ++accepted;
        }
    }
    for (const auto& m : curated) pool.entries.push_back({m, Provenance::curated});
    return pool;
}

/// Indices of random members that fail to halt within budget_used.
inline std::vector<std::size_t> verify_pool(const Pool& pool, unsigned threads = 0) {
    std::vector<char> bad(pool.size(), 0);
    parallel_for(pool.size(), threads, [&](std::size_t i) {
        const auto& e = pool.entries[i];
        if (e.provenance == Provenance::random) bad[i] = !run_single(e.machine, pool.budget_used).halted;
    });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bad.size(); ++i)
        if (bad[i]) out.push_back(i);
    return out;
}

inline nlohmann::json pool_to_json(const Pool& pool) {
    nlohmann::json machines = nlohmann::json::array();
    for (const auto& e : pool.entries) {
        auto j = machine_to_json(e.machine);
        j["provenance"] = to_string(e.provenance);
        machines.push_back(std::move(j));
    }
    return {{"format", "godngod-pool/1"},
            {"n_states", pool.n_states},
            {"budget", pool.budget_used},
            {"seed", pool.seed},
            {"machines", std::move(machines)}};
}

/// Accepts pool documents and plain machine collections (all curated).
inline Pool pool_from_json(const nlohmann::json& doc) {
    Pool pool;
    auto machines = machines_from_json(doc);
    const nlohmann::json& arr = doc.is_object() ? doc.at("machines") : doc;
    for (std::size_t i = 0; i < machines.size(); ++i) {
        const auto prov = arr[i].value("provenance", std::string("curated"));
        if (prov != "curated" && prov != "random") throw Error(ErrorKind::invalid_input, "unknown provenance '" + prov + "'");
        pool.entries.push_back({std::move(machines[i]), prov == "random" ? Provenance::random : Provenance::curated});
    }
    if (doc.is_object()) {
        pool.budget_used = doc.value("budget", std::uint64_t{0});
        pool.n_states = doc.value("n_states", 0);
        pool.seed = doc.value("seed", std::uint64_t{0});
    }
    return pool;
}

inline Pool load_pool(const std::string& path) {
    try {
        return pool_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid_input, path + ": " + e.what());
    }
}

// --- search ----------------------------------------------------------------

struct SearchParams {
    std::size_t population_size = 50;
    std::size_t generations = 100;
    std::size_t runs_per_fitness = 4;
    std::size_t min_breed = 2;
    std::size_t max_breed = 8;
    double p_add = 0.3;
    double p_drop = 0.2;
    double p_replace = 0.4;
    double elite_fraction = 0.2;
    std::uint64_t run_budget = 100'000;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (population_size < 1) throw Error(ErrorKind::invalid_input, "population_size must be at least 1");
        if (generations < 1) throw Error(ErrorKind::invalid_input, "generations must be at least 1");
        if (runs_per_fitness < 1) throw Error(ErrorKind::invalid_input, "runs_per_fitness must be at least 1");
        if (min_breed < 2) throw Error(ErrorKind::invalid_input, "min_breed must be at least 2");
        if (max_breed < min_breed) throw Error(ErrorKind::invalid_input, "max_breed must be >= min_breed");
        if (!prob(p_add) || !prob(p_drop) || !prob(p_replace) || p_add + p_drop + p_replace > 1.0 + 1e-12)
            throw Error(ErrorKind::invalid_input, "mutation probabilities must lie in [0,1] and sum to at most 1");
        if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) throw Error(ErrorKind::invalid_input, "elite_fraction must lie in (0,1]");
        if (run_budget < 1) throw Error(ErrorKind::invalid_input, "run_budget must be at least 1");
    }

    std::size_t elite_count() const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(elite_fraction * static_cast<double>(population_size)));
    }
};

inline nlohmann::json search_params_to_json(const SearchParams& p) {
    return {{"population_size", p.population_size}, {"generations", p.generations}, {"runs_per_fitness", p.runs_per_fitness},
            {"min_breed", p.min_breed},             {"max_breed", p.max_breed},     {"p_add", p.p_add},
            {"p_drop", p.p_drop},                   {"p_replace", p.p_replace},     {"elite_fraction", p.elite_fraction},
            {"run_budget", p.run_budget},           {"master_seed", p.master_seed}};
}

/// Missing keys keep the values already in `base`.
inline SearchParams search_params_from_json(const nlohmann::json& j, SearchParams base = {}) {
    if (!j.is_object()) throw Error(ErrorKind::invalid_input, "search parameters must be an object");
    try {
        base.population_size = j.value("population_size", base.population_size);
        base.generations = j.value("generations", base.generations);
        base.runs_per_fitness = j.value("runs_per_fitness", base.runs_per_fitness);
        base.min_breed = j.value("min_breed", base.min_breed);
        base.max_breed = j.value("max_breed", base.max_breed);
        base.p_add = j.value("p_add", base.p_add);
        base.p_drop = j.value("p_drop", base.p_drop);
        base.p_replace = j.value("p_replace", base.p_replace);
        base.elite_fraction = j.value("elite_fraction", base.elite_fraction);
        base.run_budget = j.value("run_budget", base.run_budget);
        base.master_seed = j.value("master_seed", base.master_seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid_input, std::string("search parameters: ") + e.what());
    }
    return base;
}

struct Fitness {
    std::optional<double> value;  // empty: flagged infinite
    RunResult best_run;

    bool infinite() const noexcept { return !value.has_value(); }

    /// Ranking key; flagged-infinite breeds rank below every finite score.
    double score() const noexcept { return value ? *value : -1.0; }
};

/// Max dimension over runs_per_fitness seeded runs. Terminated runs without
/// a dimension score 0; no terminated run at all flags the breed infinite.
inline Fitness fitness(const Breed& breed, const SearchParams& params, Rng& rng) {
    if (breed.size() < params.min_breed || breed.size() > params.max_breed)
        throw Error(ErrorKind::invalid_input, "breed size outside search bounds");
    Fitness f;
    std::optional<RunResult> first_terminated;
    std::optional<RunResult> first_run;
    for (std::size_t i = 0; i < params.runs_per_fitness; ++i) {
        RunResult r = orchestrate(breed, rng(), params.run_budget);
        if (!first_run) first_run = r;
        if (!r.terminated()) continue;
        if (!first_terminated) first_terminated = r;
        if (r.dimension && (!f.value || *r.dimension > *f.value)) {
            f.value = *r.dimension;
            f.best_run = r;
        }
    }
    if (!f.value && first_terminated) {
        f.value = 0.0;
        f.best_run = *first_terminated;
    } else if (!f.value) {
        f.best_run = *first_run;
    }
    return f;
}

struct GenerationStats {
    std::size_t generation = 0;
    double best = 0.0;  // max finite fitness, 0 when none
    double mean = 0.0;  // mean over finite fitness values, 0 when none
};

struct SearchReport {
    Breed best_breed;
    double best_fitness = 0.0;
    bool best_flagged_infinite = false;
    RunResult best_run;
    std::vector<GenerationStats> history;
    std::vector<Breed> flagged_infinite;  // first-seen order, distinct member lists
};

namespace detail {

inline void mutate(Breed& b, std::span<const Machine> pool, const SearchParams& p, Rng& rng) {
    enum class Event { add, drop, replace, none };
    const double u = rng.uniform();
    Event ev = Event::none;
    if (u < p.p_add) ev = Event::add;
    else if (u < p.p_add + p.p_drop) ev = Event::drop;
    else if (u < p.p_add + p.p_drop + p.p_replace) ev = Event::replace;

    if (ev == Event::add && b.size() >= p.max_breed) ev = Event::replace;
    if (ev == Event::drop && b.size() <= p.min_breed) ev = Event::replace;

    switch (ev) {
        case Event::add: {
            Machine m = pool[rng.below(pool.size())];
            const auto at = static_cast<std::ptrdiff_t>(rng.below(b.size() + 1));
            b.members.insert(b.members.begin() + at, std::move(m));
            break;
        }
        case Event::drop:
            b.members.erase(b.members.begin() + static_cast<std::ptrdiff_t>(rng.below(b.size())));
            break;
        case Event::replace:
            b.members[rng.below(b.size())] = pool[rng.below(pool.size())];
            break;
        case Event::none:
            break;
    }
}

}  // namespace detail

/// Elitist mutation-only search. Elites keep their cached fitness, so the
/// per-generation best never decreases.
inline SearchReport evolve(std::span<const Machine> pool, const SearchParams& params) {
    params.validate();
    if (pool.size() < params.min_breed) throw Error(ErrorKind::invalid_input, "pool smaller than min_breed");

    struct Individual {
        Breed breed;
        std::optional<Fitness> fit;
    };

    std::vector<Individual> population(params.population_size);
    {
        Rng init(derive_seed(params.master_seed, {0x1417}));
        for (auto& ind : population) {
            const auto size = static_cast<std::size_t>(
                init.between(static_cast<std::int64_t>(params.min_breed), static_cast<std::int64_t>(params.max_breed)));
            for (std::size_t i = 0; i < size; ++i) ind.breed.members.push_back(pool[init.below(pool.size())]);
        }
    }

    SearchReport report;
    std::vector<std::vector<std::string>> flagged_keys;
    const std::size_t n_elite = std::min(params.elite_count(), params.population_size);

    for (std::size_t gen = 0; gen < params.generations; ++gen) {
        parallel_for(population.size(), params.threads, [&](std::size_t i) {
            if (population[i].fit) return;
            Rng rng(derive_seed(params.master_seed, {gen + 1, i}));
            population[i].fit = fitness(population[i].breed, params, rng);
        });

        for (const auto& ind : population) {
            if (!ind.fit->infinite()) continue;
            auto key = ind.breed.member_ids();
            if (std::find(flagged_keys.begin(), flagged_keys.end(), key) != flagged_keys.end()) continue;
            flagged_keys.push_back(std::move(key));
            report.flagged_infinite.push_back(ind.breed);
        }

        std::stable_sort(population.begin(), population.end(),
                         [](const Individual& a, const Individual& b) { return a.fit->score() > b.fit->score(); });

        GenerationStats stats{gen, 0.0, 0.0};
        std::size_t finite = 0;
        for (const auto& ind : population) {
            if (ind.fit->infinite()) continue;
            stats.best = std::max(stats.best, *ind.fit->value);
            stats.mean += *ind.fit->value;
            ++finite;
        }
        if (finite) stats.mean /= static_cast<double>(finite);
        report.history.push_back(stats);

        if (gen + 1 == params.generations) break;

        Rng mut(derive_seed(params.master_seed, {gen + 1, 0x6d7574}));
        for (std::size_t i = n_elite; i < population.size(); ++i) {
            Individual child{population[mut.below(n_elite)].breed, std::nullopt};
            detail::mutate(child.breed, pool, params, mut);
            population[i] = std::move(child);
        }
    }

    const Individual& best = population.front();
    report.best_breed = best.breed;
    report.best_flagged_infinite = best.fit->infinite();
    report.best_fitness = best.fit->value.value_or(0.0);
    report.best_run = best.fit->best_run;
    return report;
}

inline std::string history_to_csv(std::span<const GenerationStats> history) {
    std::string out = "generation,best_fitness,mean_fitness\n";
    for (const auto& h : history)
        out += std::to_string(h.generation) + "," + format_double(h.best) + "," + format_double(h.mean) + "\n";
    return out;
}

inline nlohmann::json search_report_to_json(const SearchReport& r) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : r.history) history.push_back({{"generation", h.generation}, {"best", h.best}, {"mean", h.mean}});
    nlohmann::json flagged = nlohmann::json::array();
    for (const auto& b : r.flagged_infinite) flagged.push_back(b.member_ids());
    return {{"best_breed", breed_to_json(r.best_breed)},
            {"best_fitness", r.best_fitness},
            {"best_flagged_infinite", r.best_flagged_infinite},
            {"best_run", run_result_to_json(r.best_run)},
            {"history", std::move(history)},
            {"flagged_infinite", std::move(flagged)}};
}

}  // namespace godngod
