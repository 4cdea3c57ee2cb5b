#include <gtest/gtest.h>

#include <thread>

#include "godngod/service.hpp"
#include "test_support.hpp"

namespace {

using namespace godngod;
using nlohmann::json;
using testing_support::TempDir;

constexpr const char* kBB2 = "1 0 -> 1 R 2\n1 1 -> 1 L 2\n2 0 -> 1 L 1\n2 1 -> 1 R 0";
constexpr const char* kToken = "s3cret";

Pool small_pool() {
    PoolOptions o;
    o.target_count = 10;
    o.budget = 1000;
    o.seed = 4;
    return generate_pool(o, std::vector<Machine>{parse_machine(kBB2, "bb2")});
}

ServiceConfig config() {
    ServiceConfig c;
    c.curator_token = kToken;
    c.default_params.population_size = 8;
    c.default_params.generations = 3;
    c.default_params.max_breed = 4;
    c.default_params.run_budget = 2000;
    c.task_seed = 77;
    return c;
}

json submission(std::uint64_t seed, std::size_t copies = 3) {
    Breed b;
    b.members.assign(copies, parse_machine(kBB2));
    const RunResult r = orchestrate(b, seed, 1000);
    json machines = json::array();
    for (std::size_t i = 0; i < copies; ++i) machines.push_back({{"text", kBB2}, {"selection_count", r.selection_counts[i]}});
    return {{"machines", machines}, {"seed", seed}, {"n_steps", r.n_steps}, {"observer", "ada"}};
}

struct Fixture : ::testing::Test {
    TempDir dir;
    CatalogStore catalog{dir.path()};
    Service service{catalog, small_pool(), config(), [] { return std::string("2026-02-02T00:00:00Z"); }};
};

using ServiceDirect = Fixture;

TEST_F(ServiceDirect, AcceptsReproducibleSubmission) {
    const json r = service.submit_specimen(submission(42));
    EXPECT_TRUE(r["ok"].get<bool>());
    EXPECT_FALSE(r["duplicate"].get<bool>());
    const Specimen s = catalog.get(r["id"]);
    EXPECT_EQ(s.n_steps, 6u);
    EXPECT_EQ(s.observer, "ada");
    EXPECT_EQ(s.found_at, "2026-02-02T00:00:00Z");
}

TEST_F(ServiceDirect, RejectsTamperedStepCount) {
    json doc = submission(42);
    doc["n_steps"] = 7;
    try {
        service.submit_specimen(doc);
        FAIL();
    } catch (const RejectedSubmission& e) {
        EXPECT_EQ(e.kind(), ErrorKind::validation);
        EXPECT_EQ(e.details()["claimed_n_steps"], 7);
        EXPECT_EQ(e.details()["reproduced_n_steps"], 6);
    }
    EXPECT_EQ(catalog.size(), 0u);
}

TEST_F(ServiceDirect, RejectsTamperedCountsAndMalformedDocuments) {
    json doc = submission(42);
    ASSERT_NE(doc["machines"][0]["selection_count"], 6);
    doc["machines"][0]["selection_count"] = 6;
    doc["machines"][1]["selection_count"] = 0;
    doc["machines"][2]["selection_count"] = 0;
    EXPECT_THROW(service.submit_specimen(doc), RejectedSubmission);
    EXPECT_THROW(service.submit_specimen(json::array()), Error);
    EXPECT_THROW(service.submit_specimen(json{{"machines", json::array()}, {"seed", 1}, {"n_steps", 1}}), Error);
    json missing = submission(1);
    missing.erase("seed");
    EXPECT_THROW(service.submit_specimen(missing), Error);
    json bad_text = submission(1);
    bad_text["machines"][0]["text"] = "1 0 -> 9 R 1";
    EXPECT_THROW(service.submit_specimen(bad_text), Error);
    json huge = submission(1);
    huge["n_steps"] = 1'000'000'000'000ULL;
    EXPECT_THROW(service.submit_specimen(huge), Error);
}

TEST_F(ServiceDirect, SubmissionIsIdempotent) {
    const json first = service.submit_specimen(submission(5));
    const json second = service.submit_specimen(submission(5));
    EXPECT_EQ(first["id"], second["id"]);
    EXPECT_TRUE(second["duplicate"].get<bool>());
    EXPECT_EQ(catalog.size(), 1u);
    // Same content, different claim: replayed and rejected, not a duplicate.
    json tampered = submission(5);
    tampered["n_steps"] = 7;
    EXPECT_THROW(service.submit_specimen(tampered), RejectedSubmission);
    EXPECT_EQ(catalog.get(first["id"]).n_steps, 6u);
}

TEST_F(ServiceDirect, TasksArePureFunctionsOfId) {
    const json a = service.fetch_task();
    const json b = service.fetch_task();
    EXPECT_NE(a["task_id"], b["task_id"]);
    EXPECT_EQ(service.task(a["task_id"]), a);
    EXPECT_EQ(service.task(1), service.task(1));
    EXPECT_EQ(a["params"]["master_seed"], a["assigned_seed"]);
    EXPECT_EQ(pool_from_json(a["pool"]).size(), 11u);
}

TEST_F(ServiceDirect, WorkerResultsChecked) {
    const json task = service.task(0);
    const Pool pool = pool_from_json(task["pool"]);
    SearchParams p = search_params_from_json(task["params"]);
    p.threads = 1;
    const SearchReport rep = evolve(pool.machines(), p);
    const Breed& best = rep.best_breed;
    json machines = json::array();
    for (std::size_t i = 0; i < best.size(); ++i)
        machines.push_back({{"text", best.members[i].canonical_text()}, {"selection_count", rep.best_run.selection_counts[i]}});
    json good{{"machines", machines}, {"seed", rep.best_run.seed}, {"n_steps", rep.best_run.n_steps},
              {"termination", to_string(rep.best_run.termination)}};
    json foreign = submission(3);
    foreign["machines"][0]["text"] = "1 0 -> 1 L 0";  // not in the pool
    json results{{"task_id", 0}, {"observer", "grace"}, {"location", {{"latitude", 10.0}, {"longitude", 20.0}}},
                 {"candidates", {good, foreign}}};
    auto [ok, body] = service.submit_results(results);
    EXPECT_FALSE(ok);
    ASSERT_EQ(body["accepted"].size(), 1u);
    ASSERT_EQ(body["rejected"].size(), 1u);
    EXPECT_EQ(body["rejected"][0]["index"], 1);
    const Specimen s = catalog.get(body["accepted"][0]);
    EXPECT_EQ(s.observer, "grace");
    ASSERT_TRUE(s.location);
    EXPECT_DOUBLE_EQ(s.location->latitude, 10.0);

    auto [ok2, again] = service.submit_results(json{{"task_id", 0}, {"candidates", {good}}});
    EXPECT_TRUE(ok2);
    EXPECT_EQ(again["accepted"][0], body["accepted"][0]);
    EXPECT_THROW(service.submit_results(json{{"candidates", json::array()}}), Error);
}

TEST_F(ServiceDirect, CurationAndTombstones) {
    const std::string id = service.submit_specimen(submission(1))["id"];
    EXPECT_THROW(service.curate(id, "delete", {}, ""), Error);
    EXPECT_THROW(service.curate(id, "delete", {}, "wrong"), Error);
    EXPECT_THROW(service.curate(id, "explode", {}, kToken), Error);
    EXPECT_THROW(service.curate("0123", "delete", {}, kToken), Error);
    EXPECT_EQ(service.curate(id, "rename", {{"fancy_name", "Turingus tri"}}, kToken)["specimen"]["fancy_name"], "Turingus tri");
    EXPECT_EQ(service.curate(id, "delete", {}, kToken)["specimen"]["status"], "deleted");
    EXPECT_EQ(service.list_specimens({{"status", "active"}})["specimens"].size(), 0u);
    EXPECT_EQ(service.list_specimens({})["total"], 0);
    EXPECT_EQ(service.list_specimens({{"status", "all"}})["total"], 1);
    EXPECT_THROW(service.get_specimen(id, false), Error);
    EXPECT_EQ(service.get_specimen(id, true)["specimen"]["status"], "deleted");
    try {
        service.curate(id, "flag_infinite", {}, kToken);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::conflict);
    }
}

TEST_F(ServiceDirect, ListingFiltersAndSorts) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) service.submit_specimen(submission(seed, 2 + seed % 2));
    auto page = service.list_specimens({{"sort", "dimension"}, {"order", "desc"}, {"limit", "2"}});
    EXPECT_EQ(page["total"], 4);
    ASSERT_EQ(page["specimens"].size(), 2u);
    EXPECT_GE(page["specimens"][0]["dimension"].get<double>(), page["specimens"][1]["dimension"].get<double>());
    EXPECT_THROW(service.list_specimens({{"order", "up"}}), Error);
    EXPECT_THROW(service.list_specimens({{"limit", "-1"}}), Error);
    EXPECT_THROW(service.list_specimens({{"status", "zombie"}}), Error);
}

TEST_F(ServiceDirect, StatsEmptyAndPopulated) {
    json s = service.stats();
    EXPECT_TRUE(s["insufficient_data"].get<bool>());
    EXPECT_TRUE(s["fit"].is_null());
    EXPECT_TRUE(s["tables"]["iq"].empty());
    EXPECT_EQ(service.stats_csv("iq"), "z,iq\n");

    service.submit_specimen(submission(1, 2));  // z=2, n=6
    service.submit_specimen(submission(1, 3));  // z=3, n=6
    s = service.stats();
    EXPECT_FALSE(s["insufficient_data"].get<bool>());
    EXPECT_EQ(s["tables"]["iq"].size(), 2u);
    EXPECT_NEAR(s["fit"]["d_hat"].get<double>(), 0.0, 1e-12);
    EXPECT_EQ(service.stats_csv("iq"), "z,iq\n2,6\n3,6\n");
    EXPECT_EQ(service.stats_csv("eq"), "n,eq\n6,3\n");
    EXPECT_THROW(service.stats_csv("nope"), Error);
}

// --- over the wire -----------------------------------------------------------

struct ServiceHttp : Fixture {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    void SetUp() override {
        service.mount(server);
        port = server.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port, 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    void TearDown() override {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    httplib::Client client() { return httplib::Client("127.0.0.1", port); }
};

TEST_F(ServiceHttp, EndToEnd) {
    auto cli = client();
    auto health = cli.Get("/api/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);

    auto created = cli.Post("/api/specimens", submission(42).dump(), "application/json");
    ASSERT_TRUE(created);
    EXPECT_EQ(created->status, 201);
    const std::string id = json::parse(created->body)["id"];

    auto dup = cli.Post("/api/specimens", submission(42).dump(), "application/json");
    EXPECT_EQ(dup->status, 200);
    EXPECT_EQ(json::parse(dup->body)["id"], id);

    json tampered = submission(42);
    tampered["n_steps"] = 7;
    auto rejected = cli.Post("/api/specimens", tampered.dump(), "application/json");
    EXPECT_EQ(rejected->status, 422);
    const json err = json::parse(rejected->body);
    EXPECT_FALSE(err["ok"].get<bool>());
    EXPECT_EQ(err["error"]["kind"], "validation");
    EXPECT_EQ(err["error"]["reproduced_n_steps"], 6);
    EXPECT_EQ(err["error"]["claimed_n_steps"], 7);

    auto malformed = cli.Post("/api/specimens", "{oops", "application/json");
    EXPECT_EQ(malformed->status, 400);

    auto got = cli.Get("/api/specimens/" + id);
    EXPECT_EQ(got->status, 200);
    EXPECT_EQ(json::parse(got->body)["specimen"]["n_steps"], 6);
    EXPECT_EQ(cli.Get("/api/specimens/deadbeef")->status, 404);

    auto forbidden = cli.Delete("/api/specimens/" + id);
    EXPECT_EQ(forbidden->status, 403);
    httplib::Headers auth{{"X-Curator-Token", kToken}};
    auto renamed = cli.Patch("/api/specimens/" + id, auth, R"({"action":"rename","fancy_name":"Breedi turingi"})", "application/json");
    EXPECT_EQ(renamed->status, 200);
    auto deleted = cli.Delete("/api/specimens/" + id, auth);
    EXPECT_EQ(deleted->status, 200);

    auto listing = json::parse(cli.Get("/api/specimens?status=active")->body);
    EXPECT_TRUE(listing["specimens"].empty());
    EXPECT_EQ(cli.Get("/api/specimens/" + id)->status, 404);
    auto tomb = json::parse(cli.Get("/api/specimens/" + id + "?include_deleted=true")->body);
    EXPECT_EQ(tomb["specimen"]["status"], "deleted");
    EXPECT_EQ(tomb["specimen"]["fancy_name"], "Breedi turingi");
    auto conflict = cli.Patch("/api/specimens/" + id, auth, R"({"action":"flag_infinite"})", "application/json");
    EXPECT_EQ(conflict->status, 409);

    auto stats = cli.Get("/api/stats");
    EXPECT_EQ(stats->status, 200);
    EXPECT_TRUE(json::parse(stats->body)["insufficient_data"].get<bool>());
    auto csv = cli.Get("/api/stats?format=csv&table=eq");
    EXPECT_EQ(csv->status, 200);
    EXPECT_EQ(csv->body, "n,eq\n");
    EXPECT_EQ(cli.Get("/api/stats?format=csv&table=bogus")->status, 400);
}

TEST_F(ServiceHttp, TasksAndResults) {
    auto cli = client();
    auto a = cli.Get("/api/tasks/next");
    ASSERT_TRUE(a);
    const json task = json::parse(a->body);
    const auto again = json::parse(cli.Get("/api/tasks/" + std::to_string(task["task_id"].get<std::uint64_t>()))->body);
    EXPECT_EQ(again, task);

    json bb2_doc = submission(9, 2);
    json body{{"task_id", task["task_id"]}, {"observer", "volunteer"}, {"candidates", {bb2_doc}}};
    auto res = cli.Post("/api/results", body.dump(), "application/json");
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body)["accepted"].size(), 1u);
    bb2_doc["n_steps"] = 5;
    body["candidates"] = {bb2_doc};
    res = cli.Post("/api/results", body.dump(), "application/json");
    EXPECT_EQ(res->status, 422);
    EXPECT_EQ(json::parse(res->body)["rejected"][0]["reproduced_n_steps"], 6);
}

}  // namespace
