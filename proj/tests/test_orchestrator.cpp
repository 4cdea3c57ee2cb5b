#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "godngod/machine.hpp"
#include "godngod/orchestrator.hpp"
#include "reference_orchestrator.hpp"

namespace {

using namespace godngod;

const Machine& bb2() {
    static const Machine m = parse_machine("1 0 -> 1 R 2\n1 1 -> 1 L 2\n2 0 -> 1 L 1\n2 1 -> 1 R 0", "bb2");
    return m;
}

Breed copies(const Machine& m, std::size_t k) {
    Breed b;
    b.members.assign(k, m);
    return b;
}

reference::Outcome as_reference(const RunResult& r) {
    const auto size_sum = static_cast<std::uint64_t>(std::llround(r.o2_mean * static_cast<double>(r.n_steps)));
    return {r.n_steps, size_sum, r.selection_counts, to_string(r.termination)};
}

TEST(Dimension, ChessGame) { EXPECT_NEAR(*dimension(49, 2), 5.61471, 1e-5); }

TEST(Dimension, NeuralNetworkExamples) {
    EXPECT_NEAR(*dimension(2'304'000, 20'000), 1.479293, 1e-6);
    EXPECT_NEAR(*dimension(2'304'000, 200'000'000'000ULL), 0.5630002, 1e-6);
}

TEST(Dimension, BaseEqualsArgument) {
    for (std::uint64_t k : {2ULL, 3ULL, 17ULL, 1000ULL}) EXPECT_DOUBLE_EQ(*dimension(k, k), 1.0);
}

TEST(Dimension, BaseOneIsUndefined) {
    EXPECT_FALSE(dimension(10, 1).has_value());
    EXPECT_FALSE(dimension(1, 1).has_value());
    EXPECT_THROW(dimension(0, 2), Error);
}

TEST(Orchestrate, SingletonEqualsSoloExecution) {
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        const RunResult r = orchestrate(copies(bb2(), 1), seed, 1000);
        EXPECT_EQ(r.n_steps, 6u);
        EXPECT_DOUBLE_EQ(r.o2_mean, 1.0);
        EXPECT_EQ(r.o2_floor, 1u);
        EXPECT_FALSE(r.dimension.has_value());
        EXPECT_EQ(r.selection_counts, std::vector<std::uint64_t>{6});
        EXPECT_EQ(r.termination, Termination::all_resolved);
        EXPECT_EQ(r.halted_members, std::vector<std::size_t>{0});
        EXPECT_TRUE(r.deleted_members.empty());
        EXPECT_EQ(r.seed, seed);
    }
}

TEST(Orchestrate, ThreeIdenticalCopies) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const RunResult r = orchestrate(copies(bb2(), 3), seed, 1000);
        EXPECT_EQ(r.n_steps, 6u);
        EXPECT_DOUBLE_EQ(r.o2_mean, 3.0);
        EXPECT_EQ(r.o2_floor, 3u);
        ASSERT_TRUE(r.dimension);
        EXPECT_NEAR(*r.dimension, 1.63093, 1e-5);
        EXPECT_TRUE(r.deleted_members.empty());
        const auto& c = r.selection_counts;
        EXPECT_EQ(c[0] + c[1] + c[2], 6u);
    }
}

TEST(Orchestrate, ThreeCopiesAgreeWithAllSelectionSequences) {
    const auto all = reference::all_outcomes({bb2(), bb2(), bb2()}, 1000);
    EXPECT_EQ(all.size(), 729u);  // 3^6
    for (const auto& o : all) {
        EXPECT_EQ(o.n, 6u);
        EXPECT_EQ(o.size_sum, 18u);
        EXPECT_EQ(o.termination, "all-resolved");
    }
}

TEST(Orchestrate, LoopExhaustsBudget) {
    const RunResult r = orchestrate(copies(parse_machine("1 0 -> 0 R 1"), 1), 7, 100);
    EXPECT_EQ(r.termination, Termination::budget_exceeded);
    EXPECT_EQ(r.n_steps, 100u);
    EXPECT_FALSE(r.terminated());
}

TEST(Orchestrate, NoApplicableRule) {
    const RunResult r = orchestrate(copies(Machine(1, Machine::Table(2)), 2), 0, 10);
    EXPECT_EQ(r.termination, Termination::no_applicable_rule);
    EXPECT_EQ(r.n_steps, 0u);
    EXPECT_FALSE(r.dimension);
}

TEST(Orchestrate, DeterministicForFixedSeed) {
    Breed b;
    b.members = {bb2(), parse_machine("1 0 -> 1 L 2\n1 1 -> 0 R 1\n2 0 -> 1 R 1\n2 1 -> 1 L 0")};
    for (std::uint64_t seed = 0; seed < 10; ++seed) EXPECT_EQ(orchestrate(b, seed, 10'000), orchestrate(b, seed, 10'000));
}

TEST(Orchestrate, Errors) {
    EXPECT_THROW(orchestrate(Breed{}, 0, 10), Error);
    EXPECT_THROW(orchestrate(copies(bb2(), 1), 0, 0), Error);
    const std::vector<std::string> refs{"nope"};
    const std::vector<Machine> pool{bb2()};
    EXPECT_THROW(Breed::resolve(refs, pool), Error);
}

TEST(Orchestrate, NonProposingMemberStillExecutes) {
    // The sparse machine has no rule for (1,0) but rides along on bb2's rules
    // and is never deleted.
    Breed b;
    b.members = {bb2(), parse_machine("1 1 -> 0 L 0")};
    const RunResult r = orchestrate(b, 3, 100);
    EXPECT_EQ(r.n_steps, 6u);
    EXPECT_EQ(r.selection_counts[0] + r.selection_counts[1], 6u);
    EXPECT_DOUBLE_EQ(r.o2_mean, 2.0);
    EXPECT_TRUE(r.deleted_members.empty());
}

TEST(Orchestrate, OwnTablePolicyDeletesNonHolders) {
    // Under own-table, the step-1 rule of bb2 is not held by the second
    // machine, which is therefore deleted when bb2 is chosen.
    Breed b;
    b.members = {bb2(), parse_machine("1 0 -> 0 R 0")};
    std::set<std::vector<std::size_t>> deletion_patterns;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const RunResult r = orchestrate(b, seed, 100, ExecutionPolicy::own_table);
        deletion_patterns.insert(r.deleted_members);
        EXPECT_EQ(r.deleted_members.size(), 1u);
        const auto sum = r.selection_counts[0] + r.selection_counts[1];
        EXPECT_EQ(sum, r.n_steps);
    }
    EXPECT_EQ(deletion_patterns.size(), 2u);  // either member can win step 1
}

TEST(Orchestrate, SurvivorsShareControlState) {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        Breed b;
        const std::size_t k = 2 + rng.below(3);
        for (std::size_t i = 0; i < k; ++i) b.members.push_back(random_machine(2 + static_cast<int>(rng.below(2)), rng));
        for (auto policy : {ExecutionPolicy::matching_configuration, ExecutionPolicy::own_table}) {
            Orchestration orch(b, 300, policy);
            Rng choice(trial);
            std::vector<std::size_t> proposers;
            std::size_t last_live = orch.live_count();
            while (!orch.advance(proposers)) {
                orch.choose(proposers[choice.below(proposers.size())]);
                const auto states = orch.live_states();
                ASSERT_FALSE(states.empty());
                ASSERT_TRUE(std::all_of(states.begin(), states.end(), [&](int s) { return s == states.front(); }));
                ASSERT_LE(orch.live_count(), last_live);
                last_live = orch.live_count();
            }
            if (policy == ExecutionPolicy::matching_configuration) {
                ASSERT_TRUE(orch.result(0).deleted_members.empty());
            }
        }
    }
}

TEST(Orchestrate, StepOneDeletesNobody) {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        Breed b;
        for (int i = 0; i < 4; ++i) b.members.push_back(random_machine(3, rng));
        const RunResult r = orchestrate(b, trial, 1);
        if (r.n_steps == 1) {
            EXPECT_TRUE(r.deleted_members.empty());
            EXPECT_DOUBLE_EQ(r.o2_mean, 4.0);
        }
    }
}

TEST(Orchestrate, ResultInvariants) {
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        Breed b;
        const std::size_t k = 1 + rng.below(5);
        for (std::size_t i = 0; i < k; ++i) b.members.push_back(random_machine(1 + static_cast<int>(rng.below(3)), rng));
        const RunResult r = orchestrate(b, rng(), 500);
        std::uint64_t sum = 0;
        for (auto c : r.selection_counts) sum += c;
        ASSERT_EQ(sum, r.n_steps);
        if (r.n_steps >= 1) {
            ASSERT_GE(r.o2_mean, 1.0);
            ASSERT_LE(r.o2_mean, static_cast<double>(k));
            ASSERT_EQ(r.o2_floor, static_cast<std::uint64_t>(std::floor(r.o2_mean)));
        }
        ASSERT_EQ(r.dimension.has_value(), r.o2_floor >= 2 && r.n_steps >= 1);
    }
}

TEST(EnumerateRuns, IdenticalCopiesHaveOneOutcomeValue) {
    const auto runs = enumerate_runs(copies(bb2(), 3), 10);
    EXPECT_EQ(runs.size(), 729u);
    for (const auto& e : runs) {
        EXPECT_EQ(e.result.n_steps, 6u);
        EXPECT_EQ(e.choices.size(), 6u);
    }
}

TEST(EnumerateRuns, SingletonHasExactlyOneOutcome) {
    const auto runs = enumerate_runs(copies(bb2(), 1), 100);
    ASSERT_EQ(runs.size(), 1u);
    EXPECT_EQ(runs[0].result.n_steps, 6u);
}

TEST(EnumerateRuns, BoundExceeded) {
    EXPECT_THROW(enumerate_runs(copies(bb2(), 4), 10), Error);  // 4^10 > 10^6
    EXPECT_NO_THROW(enumerate_runs(copies(bb2(), 1), 10'000'000));
}

TEST(EnumerateRuns, ContainsSampledRunsAndMatchesReference) {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        Breed b;
        b.members = {random_machine(2, rng), random_machine(3, rng)};
        for (auto policy : {ExecutionPolicy::matching_configuration, ExecutionPolicy::own_table}) {
            const auto runs = enumerate_runs(b, 5, policy);
            ASSERT_LE(runs.size(), 32u);

            std::multiset<reference::Outcome> mine, theirs;
            for (const auto& e : runs) mine.insert(as_reference(e.result));
            for (const auto& o : reference::all_outcomes(b.members, 5, policy == ExecutionPolicy::own_table)) theirs.insert(o);
            ASSERT_EQ(mine, theirs);

            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                const RunResult r = orchestrate(b, seed, 5, policy);
                const bool found = std::any_of(runs.begin(), runs.end(), [&](const EnumeratedRun& e) { return same_outcome(e.result, r); });
                ASSERT_TRUE(found) << "seed " << seed;
            }
        }
    }
}

TEST(EnumerateRuns, ChoicesReplayToTheirResult) {
    Breed b;
    b.members = {bb2(), parse_machine("1 0 -> 1 R 2\n1 1 -> 0 L 2\n2 0 -> 1 L 1\n2 1 -> 1 R 1")};
    for (const auto& e : enumerate_runs(b, 8)) {
        Orchestration orch(b, 8);
        std::vector<std::size_t> proposers;
        std::size_t i = 0;
        while (!orch.advance(proposers)) orch.choose(e.choices.at(i++));
        EXPECT_EQ(i, e.choices.size());
        EXPECT_EQ(orch.result(0), e.result);
    }
}

TEST(BreedDocument, RoundTrip) {
    Breed b = copies(bb2(), 2);
    b.members.push_back(parse_machine("1 0 -> 1 R 0", "tiny"));
    b.name = "trio";
    const Breed back = breed_from_json(breed_to_json(b));
    EXPECT_EQ(back, b);
    EXPECT_EQ(back.name, "trio");
}

TEST(BreedDocument, ResolvesByName) {
    const auto doc = nlohmann::json::parse(R"({"machines":[{"name":"halt","text":"1 0 -> 1 R 0"}],"members":["halt","halt"]})");
    EXPECT_EQ(breed_from_json(doc).size(), 2u);
    EXPECT_THROW(breed_from_json(nlohmann::json::parse(R"({"machines":[],"members":[]})")), Error);
}

TEST(RunResultDocument, RoundTripAndCsv) {
    const RunResult r = orchestrate(copies(bb2(), 3), 5, 100);
    EXPECT_EQ(run_result_from_json(run_result_to_json(r)), r);
    const RunResult runs[] = {r};
    const std::string csv = runs_to_csv(runs);
    EXPECT_EQ(csv.substr(0, kRunCsvHeader.size()), kRunCsvHeader);
    EXPECT_NE(csv.find(",6,3,3,"), std::string::npos);
    EXPECT_NE(csv.find("all-resolved"), std::string::npos);
}

}  // namespace
