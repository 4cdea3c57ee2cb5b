#pragma once

// Empirical intelligence functions over a cloud of orchestration runs.
//
//   iq[Z] = max N over terminated runs with floor(o2) == Z
//   eq[N] = max floor(o2) over terminated runs with n_steps >= N,
//           evaluated at the distinct N values observed
//
// and a log-log least-squares fit of iq against Z for the conjectured power
// law IQ ~ EQ^D.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "godngod/error.hpp"
#include "godngod/orchestrator.hpp"
#include "godngod/rng.hpp"
#include "godngod/util.hpp"

namespace godngod {

struct RunSample {
    std::uint64_t z = 1;  // floor(o2)
    std::uint64_t n = 1;  // n_steps
    bool terminated = true;

    bool operator==(const RunSample&) const = default;
};

/// Samples are only defined for runs that executed at least one step.
inline std::optional<RunSample> sample_of(const RunResult& r) {
    if (r.n_steps < 1 || r.o2_floor < 1) return std::nullopt;
    return RunSample{r.o2_floor, r.n_steps, r.terminated()};
}

struct IqEqTable {
    std::map<std::uint64_t, std::uint64_t> iq;
    std::map<std::uint64_t, std::uint64_t> eq;
    std::size_t sample_count = 0;  // terminated samples that contributed

    bool operator==(const IqEqTable&) const = default;
};

inline IqEqTable estimate_iq_eq(std::span<const RunSample> samples) {
    IqEqTable t;
    for (const auto& s : samples) {
        if (!s.terminated) continue;
        if (s.z < 1 || s.n < 1) throw Error(ErrorKind::invalid_input, "run sample needs z >= 1 and n >= 1");
        auto [it, inserted] = t.iq.emplace(s.z, s.n);
        if (!inserted) it->second = std::max(it->second, s.n);
        t.eq.emplace(s.n, 0);
        ++t.sample_count;
    }
    if (t.sample_count == 0) throw Error(ErrorKind::invalid_input, "no terminated samples");

    // best_z_at[N] = max z among samples with n == N, then a suffix maximum.
    std::map<std::uint64_t, std::uint64_t> best_z_at;
    for (const auto& s : samples) {
        if (!s.terminated) continue;
        auto& v = best_z_at[s.n];
        v = std::max(v, s.z);
    }
    std::uint64_t running = 0;
    for (auto it = best_z_at.rbegin(); it != best_z_at.rend(); ++it) {
        running = std::max(running, it->second);
        t.eq[it->first] = running;
    }
    return t;
}

struct PowerLawFit {
    double d_hat = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    std::size_t point_count = 0;
};

/// Least squares of ln iq[z] on ln z over entries with z >= 2.
inline PowerLawFit fit_power_law(const IqEqTable& table) {
    std::vector<double> xs, ys;
    for (const auto& [z, n] : table.iq) {
        if (z < 2) continue;
        xs.push_back(std::log(static_cast<double>(z)));
        ys.push_back(std::log(static_cast<double>(n)));
    }
    if (xs.size() < 2) throw Error(ErrorKind::invalid_input, "power-law fit needs at least 2 points with z >= 2");

    const double count = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= count;
    my /= count;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw Error(ErrorKind::invalid_input, "degenerate fit: identical abscissae");

    PowerLawFit fit;
    fit.d_hat = sxy / sxx;
    fit.intercept = my - fit.d_hat * mx;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (fit.intercept + fit.d_hat * xs[i]);
        fit.residual += e * e;
    }
    fit.point_count = xs.size();
    return fit;
}

struct SweepParams {
    std::uint64_t runs = 0;
    std::size_t min_breed = 1;
    std::size_t max_breed = 1;
    std::uint64_t max_steps = 100'000;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0 = hardware concurrency
    ExecutionPolicy policy = ExecutionPolicy::matching_configuration;
};

struct SweepOutput {
    std::vector<RunSample> samples;  // runs with n_steps >= 1, in run order
    std::vector<RunResult> results;  // every run, in run order
};

/// Random breed for run `index`: size uniform in range, members uniform
/// with replacement.
inline Breed sweep_breed(std::span<const Machine> pool, const SweepParams& p, std::uint64_t index) {
    Rng rng(derive_seed(p.seed, {index, 0}));
    const auto size = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(p.min_breed), static_cast<std::int64_t>(p.max_breed)));
    Breed b;
    b.members.reserve(size);
    for (std::size_t i = 0; i < size; ++i) b.members.push_back(pool[rng.below(pool.size())]);
    return b;
}

inline SweepOutput sweep(std::span<const Machine> pool, const SweepParams& p) {
    if (p.min_breed < 1 || p.max_breed < p.min_breed) throw Error(ErrorKind::invalid_input, "invalid breed size range");
    if (p.max_steps < 1) throw Error(ErrorKind::invalid_input, "max_steps must be at least 1");
    SweepOutput out;
    if (p.runs == 0) return out;
    if (pool.empty()) throw Error(ErrorKind::invalid_input, "sweep pool is empty");

    out.results.resize(p.runs);
    parallel_for(p.runs, p.threads, [&](std::size_t i) {
        const Breed b = sweep_breed(pool, p, i);
        out.results[i] = orchestrate(b, derive_seed(p.seed, {i, 1}), p.max_steps, p.policy);
    });
    for (const auto& r : out.results)
        if (auto s = sample_of(r)) out.samples.push_back(*s);
    return out;
}

// --- exports ---------------------------------------------------------------

inline std::string samples_to_csv(std::span<const RunSample> samples) {
    std::string out = "z,n,terminated\n";
    for (const auto& s : samples)
        out += std::to_string(s.z) + "," + std::to_string(s.n) + "," + (s.terminated ? "true" : "false") + "\n";
    return out;
}

inline std::string iq_to_csv(const IqEqTable& t) {
    std::string out = "z,iq\n";
    for (const auto& [z, n] : t.iq) out += std::to_string(z) + "," + std::to_string(n) + "\n";
    return out;
}

inline std::string eq_to_csv(const IqEqTable& t) {
    std::string out = "n,eq\n";
    for (const auto& [n, z] : t.eq) out += std::to_string(n) + "," + std::to_string(z) + "\n";
    return out;
}

inline nlohmann::json table_to_json(const IqEqTable& t) {
    nlohmann::json iq = nlohmann::json::array();
    for (const auto& [z, n] : t.iq) iq.push_back({{"z", z}, {"iq", n}});
    nlohmann::json eq = nlohmann::json::array();
    for (const auto& [n, z] : t.eq) eq.push_back({{"n", n}, {"eq", z}});
    return {{"iq", std::move(iq)}, {"eq", std::move(eq)}, {"sample_count", t.sample_count}};
}

inline nlohmann::json fit_to_json(const PowerLawFit& f) {
    return {{"d_hat", f.d_hat}, {"intercept", f.intercept}, {"residual", f.residual}, {"point_count", f.point_count}};
}

}  // namespace godngod
