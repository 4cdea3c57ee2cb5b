// godngod: command-line entry point.
//
// Result documents go to stdout as JSON; human-readable progress and the
// effective seed go to stderr. Exit codes: 0 ok, 2 invalid input, 3
// validation failure, 4 I/O failure, 5 server failure.

#include <csignal>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "godngod/godngod.hpp"

namespace {

using namespace godngod;
using nlohmann::json;

enum Exit : int { kOk = 0, kInvalid = 2, kValidation = 3, kIo = 4, kServer = 5 };

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_input:
        case ErrorKind::not_found:
        case ErrorKind::conflict:
        case ErrorKind::unauthorized: return kInvalid;
        case ErrorKind::validation: return kValidation;
        case ErrorKind::io: return kIo;
        case ErrorKind::server: return kServer;
    }
    return kServer;
}

void emit(const json& doc) { std::cout << doc.dump(2) << "\n"; }

std::uint64_t effective_seed(const std::optional<std::uint64_t>& seed) {
    const std::uint64_t s = seed ? *seed : fresh_seed();
    std::cerr << "seed: " << s << "\n";
    return s;
}

std::vector<Machine> load_pool_machines(const std::string& path) { return load_pool(path).machines(); }

json fit_or_null(const std::vector<RunSample>& samples, json& doc) {
    std::size_t terminated = 0;
    for (const auto& s : samples) terminated += s.terminated;
    if (terminated == 0) {
        doc["tables"] = nullptr;
        doc["fit"] = nullptr;
        doc["fit_error"] = "no terminated samples";
        return doc;
    }
    const auto table = estimate_iq_eq(samples);
    doc["tables"] = table_to_json(table);
    try {
        doc["fit"] = fit_to_json(fit_power_law(table));
    } catch (const Error& e) {
        doc["fit"] = nullptr;
        doc["fit_error"] = e.what();
    }
    return doc;
}

// --- run / enumerate --------------------------------------------------------

struct RunArgs {
    std::string breed;
    std::optional<std::uint64_t> seed;
    std::uint64_t max_steps = 1'000'000;
    std::string policy = "matching-configuration";
    std::string out;
    std::string csv;
};

int cmd_run(const RunArgs& a) {
    const Breed breed = load_breed(a.breed);
    const std::uint64_t seed = effective_seed(a.seed);
    const auto policy = execution_policy_from_string(a.policy);
    const RunResult r = orchestrate(breed, seed, a.max_steps, policy);
    json doc{{"command", "run"},
             {"breed", breed_to_json(breed)},
             {"max_steps", a.max_steps},
             {"policy", to_string(policy)},
             {"result", run_result_to_json(r)}};
    if (!a.out.empty()) write_file(a.out, doc.dump(2) + "\n");
    if (!a.csv.empty()) write_file(a.csv, runs_to_csv(std::span<const RunResult>(&r, 1)));
    emit(doc);
    std::cerr << "N=" << r.n_steps << " o2=" << r.o2_mean << " floor(o2)=" << r.o2_floor
              << " dimension=" << (r.dimension ? format_double(*r.dimension) : std::string("undefined")) << " ("
              << to_string(r.termination) << ")\n";
    return kOk;
}

int cmd_enumerate(const RunArgs& a) {
    const Breed breed = load_breed(a.breed);
    const auto policy = execution_policy_from_string(a.policy);
    const auto runs = enumerate_runs(breed, a.max_steps, policy);
    json outcomes = json::array();
    for (const auto& e : runs) outcomes.push_back({{"choices", e.choices}, {"result", run_result_to_json(e.result)}});
    emit({{"command", "enumerate"}, {"max_steps", a.max_steps}, {"policy", to_string(policy)}, {"count", runs.size()}, {"outcomes", std::move(outcomes)}});
    std::cerr << runs.size() << " selection sequences\n";
    return kOk;
}

// --- sweep ---------------------------------------------------------------

struct SweepArgs {
    std::string pool;
    std::uint64_t runs = 1000;
    std::size_t min_breed = 2;
    std::size_t max_breed = 5;
    std::uint64_t max_steps = 100'000;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string policy = "matching-configuration";
    std::string samples_out, iq_out, eq_out, runs_out;
};

int cmd_sweep(const SweepArgs& a) {
    const std::uint64_t seed = effective_seed(a.seed);
    SweepParams p;
    p.runs = a.runs;
    p.min_breed = a.min_breed;
    p.max_breed = a.max_breed;
    p.max_steps = a.max_steps;
    p.seed = seed;
    p.threads = a.threads;
    p.policy = execution_policy_from_string(a.policy);
    const auto pool = a.runs ? load_pool_machines(a.pool) : std::vector<Machine>{};
    const SweepOutput out = sweep(pool, p);

    if (!a.samples_out.empty()) write_file(a.samples_out, samples_to_csv(out.samples));
    if (!a.runs_out.empty()) write_file(a.runs_out, runs_to_csv(out.results));

    json doc{{"command", "sweep"},
             {"seed", seed},
             {"runs", a.runs},
             {"min_breed", a.min_breed},
             {"max_breed", a.max_breed},
             {"max_steps", a.max_steps},
             {"policy", to_string(p.policy)},
             {"sample_count", out.samples.size()}};
    fit_or_null(out.samples, doc);
    if (!doc["tables"].is_null()) {
        const auto table = estimate_iq_eq(out.samples);
        if (!a.iq_out.empty()) write_file(a.iq_out, iq_to_csv(table));
        if (!a.eq_out.empty()) write_file(a.eq_out, eq_to_csv(table));
    } else {
        if (!a.iq_out.empty()) write_file(a.iq_out, "z,iq\n");
        if (!a.eq_out.empty()) write_file(a.eq_out, "n,eq\n");
    }
    emit(doc);
    std::cerr << out.samples.size() << " samples from " << a.runs << " runs\n";
    return kOk;
}

// --- pool ----------------------------------------------------------------

struct PoolArgs {
    int states = 2;
    std::size_t count = 500;
    std::uint64_t budget = 100'000;
    std::optional<std::uint64_t> seed;
    std::string curated;
    std::string out;
    std::string pool;
    unsigned threads = 0;
};

int cmd_pool_generate(const PoolArgs& a) {
    PoolOptions opt;
    opt.n_states = a.states;
    opt.target_count = a.count;
    opt.budget = a.budget;
    opt.seed = effective_seed(a.seed);
    opt.threads = a.threads;
    const auto curated = a.curated.empty() ? std::vector<Machine>{} : load_machine_collection(a.curated);
    const Pool pool = generate_pool(opt, curated);
    const json doc = pool_to_json(pool);
    if (a.out.empty()) {
        emit(doc);
    } else {
        write_file(a.out, doc.dump(2) + "\n");
        emit({{"command", "pool generate"},
              {"out", a.out},
              {"seed", opt.seed},
              {"n_states", a.states},
              {"budget", a.budget},
              {"size", pool.size()},
              {"pool_hash", content_hash(doc.dump())}});
    }
    std::cerr << pool.size() << " machines\n";
    return kOk;
}

int cmd_pool_verify(const PoolArgs& a) {
    const Pool pool = load_pool(a.pool);
    const auto bad = verify_pool(pool, a.threads);
    json ids = json::array();
    for (auto i : bad) ids.push_back(pool.entries[i].machine.id());
    emit({{"command", "pool verify"}, {"size", pool.size()}, {"budget", pool.budget_used}, {"ok", bad.empty()}, {"failing", ids}});
    if (!bad.empty()) {
        std::cerr << bad.size() << " random machines do not halt within " << pool.budget_used << " steps\n";
        return kValidation;
    }
    std::cerr << "pool verified\n";
    return kOk;
}

// --- search --------------------------------------------------------------

struct SearchArgs {
    std::string pool;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string history_out;
    std::string report_out;
    SearchParams overrides;
};

SearchParams merged_params(const std::string& config, const SearchParams& overrides, CLI::App* sub) {
    SearchParams p;
    if (!config.empty()) {
        try {
            p = search_params_from_json(json::parse(read_file(config)));
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::invalid_input, config + ": " + e.what());
        }
    }
    auto given = [&](const char* flag) { return sub->count(flag) > 0; };
    if (given("--population")) p.population_size = overrides.population_size;
    if (given("--generations")) p.generations = overrides.generations;
    if (given("--runs-per-fitness")) p.runs_per_fitness = overrides.runs_per_fitness;
    if (given("--min-breed")) p.min_breed = overrides.min_breed;
    if (given("--max-breed")) p.max_breed = overrides.max_breed;
    if (given("--p-add")) p.p_add = overrides.p_add;
    if (given("--p-drop")) p.p_drop = overrides.p_drop;
    if (given("--p-replace")) p.p_replace = overrides.p_replace;
    if (given("--elite-fraction")) p.elite_fraction = overrides.elite_fraction;
    if (given("--run-budget")) p.run_budget = overrides.run_budget;
    p.threads = overrides.threads;
    return p;
}

void add_search_flags(CLI::App* sub, SearchParams& o) {
    sub->add_option("--population", o.population_size, "population size");
    sub->add_option("--generations", o.generations, "generation count");
    sub->add_option("--runs-per-fitness", o.runs_per_fitness, "orchestrations per fitness evaluation");
    sub->add_option("--min-breed", o.min_breed, "smallest breed");
    sub->add_option("--max-breed", o.max_breed, "largest breed");
    sub->add_option("--p-add", o.p_add, "add-member mutation probability");
    sub->add_option("--p-drop", o.p_drop, "drop-member mutation probability");
    sub->add_option("--p-replace", o.p_replace, "replace-member mutation probability");
    sub->add_option("--elite-fraction", o.elite_fraction, "fraction kept unchanged per generation");
    sub->add_option("--run-budget", o.run_budget, "max steps per orchestration");
    sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

int cmd_search(const SearchArgs& a, CLI::App* sub) {
    SearchParams p = merged_params(a.config, a.overrides, sub);
    std::optional<std::uint64_t> seed = a.seed;
    if (!seed && !a.config.empty()) {
        const json cfg = json::parse(read_file(a.config));
        if (cfg.contains("master_seed")) seed = cfg["master_seed"].get<std::uint64_t>();
    }
    p.master_seed = effective_seed(seed);
    const auto pool = load_pool_machines(a.pool);
    const SearchReport report = evolve(pool, p);
    json doc{{"command", "search"}, {"params", search_params_to_json(p)}, {"report", search_report_to_json(report)}};
    if (!a.history_out.empty()) write_file(a.history_out, history_to_csv(report.history));
    if (!a.report_out.empty()) write_file(a.report_out, doc.dump(2) + "\n");
    emit(doc);
    std::cerr << "best fitness " << report.best_fitness << " with " << report.best_breed.size() << " members; "
              << report.flagged_infinite.size() << " breeds flagged infinite\n";
    return kOk;
}

// --- serve / worker ------------------------------------------------------

struct ServeArgs {
    std::string listen = "127.0.0.1:8080";
    std::string catalog = "catalog";
    std::string token;
    std::string pool;
    std::string config;
    std::uint64_t task_seed = 0;
    SearchParams overrides;
};

httplib::Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a, CLI::App* sub) {
    const auto colon = a.listen.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::invalid_input, "--listen must be host:port");
    const std::string host = a.listen.substr(0, colon);
    const int port = std::stoi(a.listen.substr(colon + 1));

    std::string token = a.token;
    if (token.empty())
        if (const char* env = std::getenv("GODNGOD_CURATOR_TOKEN")) token = env;

    CatalogStore catalog(a.catalog);
    std::optional<Pool> pool;
    if (!a.pool.empty()) pool = load_pool(a.pool);
    ServiceConfig cfg;
    cfg.curator_token = token;
    cfg.default_params = merged_params(a.config, a.overrides, sub);
    cfg.task_seed = a.task_seed;
    Service service(catalog, std::move(pool), cfg);

    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    std::cerr << "listening on " << host << ":" << port << " (catalog " << a.catalog << ", " << catalog.size()
              << " specimens" << (token.empty() ? ", curation disabled" : "") << ")\n";
    if (!server.listen(host, port)) throw Error(ErrorKind::server, "cannot listen on " + a.listen);
    return kOk;
}

struct WorkerArgs {
    std::string server = "http://127.0.0.1:8080";
    std::string observer = "anonymous";
    std::optional<double> lat, lon;
    std::size_t tasks = 1;
    unsigned threads = 0;
};

json http_json(httplib::Result& res, const std::string& what) {
    if (!res) throw Error(ErrorKind::server, what + ": " + httplib::to_string(res.error()));
    try {
        return json::parse(res->body);
    } catch (const json::parse_error&) {
        throw Error(ErrorKind::server, what + ": HTTP " + std::to_string(res->status) + " with a non-JSON body");
    }
}

json submission_of(const Breed& breed, const RunResult& run) {
    json machines = json::array();
    for (std::size_t i = 0; i < breed.size(); ++i)
        machines.push_back({{"text", breed.members[i].canonical_text()}, {"name", breed.members[i].name()}, {"selection_count", run.selection_counts[i]}});
    return {{"machines", std::move(machines)}, {"seed", run.seed}, {"n_steps", run.n_steps}, {"termination", to_string(run.termination)}};
}

int cmd_worker(const WorkerArgs& a) {
    if (a.lat.has_value() != a.lon.has_value()) throw Error(ErrorKind::invalid_input, "--lat and --lon go together");
    httplib::Client client(a.server);
    client.set_read_timeout(3600, 0);
    json summary = json::array();
    for (std::size_t t = 0; t < a.tasks; ++t) {
        auto res = client.Get("/api/tasks/next");
        const json task = http_json(res, "fetch task");
        if (!task.value("ok", false)) throw Error(ErrorKind::server, "task refused: " + task.dump());
        const Pool pool = pool_from_json(task.at("pool"));
        SearchParams p = search_params_from_json(task.at("params"));
        p.threads = a.threads;
        std::cerr << "task " << task["task_id"] << " seed " << p.master_seed << "\n";
        const SearchReport report = evolve(pool.machines(), p);

        json candidates = json::array();
        if (!report.best_flagged_infinite) candidates.push_back(submission_of(report.best_breed, report.best_run));
        json body{{"task_id", task["task_id"]}, {"observer", a.observer}, {"candidates", std::move(candidates)}};
        if (a.lat) body["location"] = {{"latitude", *a.lat}, {"longitude", *a.lon}};
        auto post = client.Post("/api/results", body.dump(), "application/json");
        const json reply = http_json(post, "submit results");
        summary.push_back({{"task_id", task["task_id"]}, {"best_fitness", report.best_fitness}, {"reply", reply}});
        if (!reply.value("ok", false)) {
            emit({{"command", "worker"}, {"tasks", summary}});
            return kValidation;
        }
    }
    emit({{"command", "worker"}, {"tasks", summary}});
    return kOk;
}

// --- export / reindex -----------------------------------------------------

struct ExportArgs {
    std::string catalog = "catalog";
    std::string what = "specimens";
    std::string out;
    bool include_deleted = false;
};

int cmd_export(const ExportArgs& a) {
    CatalogStore catalog(a.catalog);
    Service service(catalog, std::nullopt, ServiceConfig{});
    std::string csv;
    if (a.what == "specimens") {
        ListQuery q;
        q.include_deleted = a.include_deleted;
        q.sort = SortKey::found_at;
        q.descending = false;
        csv = specimens_to_csv(catalog.list(q));
    } else if (a.what == "samples" || a.what == "iq" || a.what == "eq") {
        csv = service.stats_csv(a.what);
    } else {
        throw Error(ErrorKind::invalid_input, "--what must be specimens, samples, iq or eq");
    }
    if (a.out.empty()) {
        std::cout << csv;
    } else {
        write_file(a.out, csv);
        emit({{"command", "export"}, {"what", a.what}, {"out", a.out}});
    }
    return kOk;
}

int cmd_reindex(const ExportArgs& a) {
    CatalogStore catalog(a.catalog);
    const std::size_t n = catalog.rebuild_index();
    emit({{"command", "reindex"}, {"catalog", a.catalog}, {"specimens", n}});
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Orchestrated Turing machine breeds: run, measure, search and catalog"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "orchestrate one breed");
    run_cmd->add_option("--breed", run.breed, "breed document")->required();
    run_cmd->add_option("--seed", run.seed, "choice seed (random and printed when omitted)");
    run_cmd->add_option("--max-steps", run.max_steps, "step budget");
    run_cmd->add_option("--policy", run.policy, "matching-configuration | own-table");
    run_cmd->add_option("--out", run.out, "also write the result document here");
    run_cmd->add_option("--csv", run.csv, "write a comma-separated result row here");

    RunArgs en;
    en.max_steps = 8;
    auto* en_cmd = app.add_subcommand("enumerate", "enumerate every selection sequence of a small breed");
    en_cmd->add_option("--breed", en.breed, "breed document")->required();
    en_cmd->add_option("--max-steps", en.max_steps, "step budget");
    en_cmd->add_option("--policy", en.policy, "matching-configuration | own-table");

    SweepArgs sw;
    auto* sw_cmd = app.add_subcommand("sweep", "sample random breeds and estimate IQ/EQ");
    sw_cmd->add_option("--pool", sw.pool, "pool or machine collection");
    sw_cmd->add_option("--runs", sw.runs, "number of runs");
    sw_cmd->add_option("--min-breed", sw.min_breed, "smallest breed");
    sw_cmd->add_option("--max-breed", sw.max_breed, "largest breed");
    sw_cmd->add_option("--max-steps", sw.max_steps, "step budget per run");
    sw_cmd->add_option("--seed", sw.seed, "master seed (random and printed when omitted)");
    sw_cmd->add_option("--threads", sw.threads, "worker threads (0 = all cores)");
    sw_cmd->add_option("--policy", sw.policy, "matching-configuration | own-table");
    sw_cmd->add_option("--samples-out", sw.samples_out, "samples CSV (z,n,terminated)");
    sw_cmd->add_option("--iq-out", sw.iq_out, "IQ table CSV");
    sw_cmd->add_option("--eq-out", sw.eq_out, "EQ table CSV");
    sw_cmd->add_option("--runs-out", sw.runs_out, "per-run CSV");

    PoolArgs pg;
    auto* pool_cmd = app.add_subcommand("pool", "generate or verify machine pools");
    pool_cmd->require_subcommand(1);
    auto* pg_cmd = pool_cmd->add_subcommand("generate", "draw verified-halting random machines");
    pg_cmd->add_option("--states", pg.states, "states per machine");
    pg_cmd->add_option("--count", pg.count, "random machines to keep");
    pg_cmd->add_option("--budget", pg.budget, "solo halting budget");
    pg_cmd->add_option("--seed", pg.seed, "seed (random and printed when omitted)");
    pg_cmd->add_option("--curated", pg.curated, "curated machine collection to append");
    pg_cmd->add_option("--out", pg.out, "pool file");
    pg_cmd->add_option("--threads", pg.threads, "worker threads (0 = all cores)");
    PoolArgs pv;
    auto* pv_cmd = pool_cmd->add_subcommand("verify", "re-check every random member");
    pv_cmd->add_option("--pool", pv.pool, "pool file")->required();
    pv_cmd->add_option("--threads", pv.threads, "worker threads (0 = all cores)");

    SearchArgs se;
    auto* se_cmd = app.add_subcommand("search", "evolve high-dimension breeds");
    se_cmd->add_option("--pool", se.pool, "pool file")->required();
    se_cmd->add_option("--config", se.config, "search parameter document");
    se_cmd->add_option("--seed", se.seed, "master seed (random and printed when omitted)");
    se_cmd->add_option("--history-out", se.history_out, "history CSV (generation,best_fitness,mean_fitness)");
    se_cmd->add_option("--report-out", se.report_out, "also write the report document here");
    add_search_flags(se_cmd, se.overrides);

    ServeArgs sv;
    auto* sv_cmd = app.add_subcommand("serve", "run the catalog service");
    sv_cmd->add_option("--listen", sv.listen, "host:port");
    sv_cmd->add_option("--catalog", sv.catalog, "catalog directory");
    sv_cmd->add_option("--token", sv.token, "curator token (or GODNGOD_CURATOR_TOKEN)");
    sv_cmd->add_option("--pool", sv.pool, "pool served with search tasks");
    sv_cmd->add_option("--config", sv.config, "default search parameters");
    sv_cmd->add_option("--task-seed", sv.task_seed, "seed from which task seeds are derived");
    add_search_flags(sv_cmd, sv.overrides);

    WorkerArgs wk;
    auto* wk_cmd = app.add_subcommand("worker", "fetch tasks, search, submit results");
    wk_cmd->add_option("--server", wk.server, "service base URL");
    wk_cmd->add_option("--observer", wk.observer, "observer name recorded on specimens");
    wk_cmd->add_option("--lat", wk.lat, "latitude in degrees");
    wk_cmd->add_option("--lon", wk.lon, "longitude in degrees");
    wk_cmd->add_option("--tasks", wk.tasks, "tasks to process");
    wk_cmd->add_option("--threads", wk.threads, "worker threads (0 = all cores)");

    ExportArgs ex;
    auto* ex_cmd = app.add_subcommand("export", "write catalog data as comma-separated files");
    ex_cmd->add_option("--catalog", ex.catalog, "catalog directory");
    ex_cmd->add_option("--what", ex.what, "specimens | samples | iq | eq");
    ex_cmd->add_option("--out", ex.out, "output file (stdout when omitted)");
    ex_cmd->add_flag("--include-deleted", ex.include_deleted, "include tombstoned specimens");

    ExportArgs ri;
    auto* ri_cmd = app.add_subcommand("reindex", "rebuild a catalog index from its specimen files");
    ri_cmd->add_option("--catalog", ri.catalog, "catalog directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInvalid;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*en_cmd) return cmd_enumerate(en);
        if (*sw_cmd) {
            if (sw.runs > 0 && sw.pool.empty()) throw Error(ErrorKind::invalid_input, "--pool is required when --runs > 0");
            return cmd_sweep(sw);
        }
        if (*pg_cmd) return cmd_pool_generate(pg);
        if (*pv_cmd) return cmd_pool_verify(pv);
        if (*se_cmd) return cmd_search(se, se_cmd);
        if (*sv_cmd) return cmd_serve(sv, sv_cmd);
        if (*wk_cmd) return cmd_worker(wk);
        if (*ex_cmd) return cmd_export(ex);
        if (*ri_cmd) return cmd_reindex(ri);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kServer;
    }
    return kInvalid;
}
