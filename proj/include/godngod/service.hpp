#pragma once

// HTTP facade over the catalog and the breeder.
//
//   GET    /api/tasks/next          hand out the next search task
//   GET    /api/tasks/{id}          re-fetch a task (identical content)
//   POST   /api/results             worker submission for a task
//   POST   /api/specimens           single specimen submission
//   GET    /api/specimens           list (status, sort, order, limit, offset)
//   GET    /api/specimens/{id}      one specimen (include_deleted=true for tombstones)
//   PATCH  /api/specimens/{id}      curate: rename | flag_infinite | delete
//   DELETE /api/specimens/{id}      curate: delete
//   GET    /api/stats               IQ/EQ tables and fit (format=csv&table=samples|iq|eq)
//
// Every JSON response carries "ok". Curation needs the X-Curator-Token
// header. Submitted runs are replayed from (machines, seed) before they are
// admitted; nothing enters the catalog unverified.

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "godngod/breeder.hpp"
#include "godngod/catalog.hpp"
#include "godngod/error.hpp"
#include "godngod/intelligence.hpp"
#include "godngod/orchestrator.hpp"
#include "godngod/util.hpp"

namespace godngod {

using nlohmann::json;

/// A submission whose claim did not survive replay.
class RejectedSubmission : public Error {
public:
    RejectedSubmission(const std::string& what, json details)
        : Error(ErrorKind::validation, what), details_(std::move(details)) {}

    const json& details() const noexcept { return details_; }

private:
    json details_;
};

inline int http_status(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_input: return 400;
        case ErrorKind::validation: return 422;
        case ErrorKind::not_found: return 404;
        case ErrorKind::unauthorized: return 403;
        case ErrorKind::conflict: return 409;
        case ErrorKind::io:
        case ErrorKind::server: return 500;
    }
    return 500;
}

struct ServiceConfig {
    std::string curator_token;  // empty disables curation
    SearchParams default_params;
    std::uint64_t task_seed = 0;
    std::size_t default_page = 50;
    std::size_t max_page = 1000;
    std::uint64_t max_replay_steps = 10'000'000;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

class Service {
public:
    using Clock = std::function<std::string()>;

    Service(CatalogStore& catalog, std::optional<Pool> pool, ServiceConfig config, Clock clock = [] { return utc_timestamp(); })
        : catalog_(catalog), pool_(std::move(pool)), config_(std::move(config)), clock_(std::move(clock)) {
        if (pool_) {
            pool_doc_ = pool_to_json(*pool_);
            pool_hash_ = content_hash(pool_doc_.dump());
            for (const auto& e : pool_->entries) pool_ids_.insert(e.machine.id());
        }
    }

    // --- operations (throw Error on failure) ------------------------------

    json fetch_task() { return task(next_task_.fetch_add(1)); }

    /// Task content is a pure function of its id.
    json task(std::uint64_t task_id) const {
        if (!pool_) throw Error(ErrorKind::server, "no search pool configured");
        SearchParams p = config_.default_params;
        p.master_seed = derive_seed(config_.task_seed, {task_id});
        return {{"ok", true},
                {"task_id", task_id},
                {"assigned_seed", p.master_seed},
                {"pool_hash", pool_hash_},
                {"pool", pool_doc_},
                {"params", search_params_to_json(p)}};
    }

    /// Replays one candidate and admits it. Returns (id, newly_added).
    std::pair<std::string, bool> admit(const json& doc, std::string observer = {}, std::optional<Location> location = std::nullopt,
                                       const std::unordered_set<std::string>* allowed_ids = nullptr) {
        if (!doc.is_object()) throw Error(ErrorKind::invalid_input, "submission must be an object");
        Breed breed;
        std::vector<std::uint64_t> counts;
        std::uint64_t seed = 0, n_steps = 0;
        bool infinite = false;
        try {
            const auto& machines = doc.at("machines");
            if (!machines.is_array() || machines.empty()) throw Error(ErrorKind::invalid_input, "submission needs a non-empty 'machines' array");
            for (const auto& m : machines) {
                const std::string text = m.is_string() ? m.get<std::string>() : m.at("text").get<std::string>();
                breed.members.push_back(parse_machine(text, m.is_object() ? m.value("name", std::string{}) : std::string{}));
                if (m.is_object() && m.contains("selection_count")) counts.push_back(m["selection_count"].get<std::uint64_t>());
            }
            if (doc.contains("selection_counts")) counts = doc["selection_counts"].get<std::vector<std::uint64_t>>();
            seed = doc.at("seed").get<std::uint64_t>();
            n_steps = doc.at("n_steps").get<std::uint64_t>();
            if (doc.contains("termination")) infinite = doc["termination"].get<std::string>() == "budget-exceeded";
            if (doc.contains("status")) infinite = infinite || doc["status"].get<std::string>() == "flagged_infinite";
            if (observer.empty()) observer = doc.value("observer", std::string{});
            if (!location && doc.contains("location")) location = location_from_json(doc["location"]);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::invalid_input, std::string("malformed submission: ") + e.what());
        }
        if (counts.size() != breed.size())
            throw Error(ErrorKind::invalid_input, "submission needs one selection count per machine");
        if (allowed_ids) {
            for (const auto& m : breed.members)
                if (!allowed_ids->contains(m.id()))
                    throw Error(ErrorKind::invalid_input, "machine " + m.id() + " is not in the task pool");
        }

        if (n_steps > config_.max_replay_steps)
            throw Error(ErrorKind::invalid_input, "claimed n_steps exceeds the server replay limit of " +
                                                      std::to_string(config_.max_replay_steps));

        const std::string id = specimen_id(breed, seed);
        // A stored specimen only answers a claim it matches exactly; any
        // other claim for the same content goes through replay.
        auto matches_stored = [&] {
            auto stored = catalog_.find(id);
            return stored && stored->n_steps == n_steps && stored->selection_counts() == counts &&
                   (stored->status == SpecimenStatus::flagged_infinite) == infinite;
        };
        {
            std::lock_guard lock(submit_mutex_);
            if (matches_stored()) return {id, false};
        }

        Revalidation v = revalidate(breed, seed, n_steps, counts, infinite);
        if (!v.ok)
            throw RejectedSubmission(v.message, {{"claimed_n_steps", n_steps},
                                                 {"reproduced_n_steps", v.reproduced.n_steps},
                                                 {"claimed_selection_counts", counts},
                                                 {"reproduced_selection_counts", v.reproduced.selection_counts},
                                                 {"reproduced_termination", to_string(v.reproduced.termination)}});

        Specimen s = make_specimen(v.reproduced, breed, std::move(observer), location, clock_());
        std::lock_guard lock(submit_mutex_);
        if (catalog_.find(id)) return {id, false};  // a concurrent submission won
        catalog_.save(s);
        return {id, true};
    }

    json submit_specimen(const json& doc) {
        auto [id, added] = admit(doc);
        return {{"ok", true}, {"id", id}, {"duplicate", !added}};
    }

    /// Worker submission; candidates are judged independently.
    std::pair<bool, json> submit_results(const json& doc) {
        if (!doc.is_object() || !doc.contains("task_id") || !doc.contains("candidates") || !doc["candidates"].is_array())
            throw Error(ErrorKind::invalid_input, "results need 'task_id' and a 'candidates' array");
        if (!pool_) throw Error(ErrorKind::server, "no search pool configured");
        std::string observer;
        std::optional<Location> location;
        try {
            doc.at("task_id").get<std::uint64_t>();
            observer = doc.value("observer", std::string{});
            if (doc.contains("location")) location = location_from_json(doc["location"]);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::invalid_input, std::string("malformed results: ") + e.what());
        }
        json accepted = json::array();
        json rejected = json::array();
        const auto& cands = doc["candidates"];
        for (std::size_t i = 0; i < cands.size(); ++i) {
            try {
                accepted.push_back(admit(cands[i], observer, location, &pool_ids_).first);
            } catch (const RejectedSubmission& e) {
                json r = e.details();
                r["index"] = i;
                r["kind"] = to_string(e.kind());
                r["message"] = e.what();
                rejected.push_back(std::move(r));
            } catch (const Error& e) {
                rejected.push_back({{"index", i}, {"kind", to_string(e.kind())}, {"message", e.what()}});
            }
        }
        const bool all_ok = rejected.empty();
        return {all_ok, {{"ok", all_ok}, {"task_id", doc["task_id"]}, {"accepted", std::move(accepted)}, {"rejected", std::move(rejected)}}};
    }

    json list_specimens(const std::multimap<std::string, std::string>& params) const {
        ListQuery q;
        q.limit = config_.default_page;
        auto get = [&](const char* key) -> std::optional<std::string> {
            auto it = params.find(key);
            if (it == params.end()) return std::nullopt;
            return it->second;
        };
        if (auto s = get("status"); s && *s != "all") q.status = status_from_string(*s);
        if (auto s = get("status"); s && *s == "all") q.include_deleted = true;
        if (auto s = get("include_deleted")) q.include_deleted = q.include_deleted || *s == "true" || *s == "1";
        if (auto s = get("sort")) q.sort = sort_key_from_string(*s);
        if (auto s = get("order")) {
            if (*s != "asc" && *s != "desc") throw Error(ErrorKind::invalid_input, "order must be asc or desc");
            q.descending = *s == "desc";
        }
        if (auto s = get("limit")) q.limit = std::min(parse_count(*s, "limit"), config_.max_page);
        if (auto s = get("offset")) q.offset = parse_count(*s, "offset");

        ListQuery all = q;
        all.offset = 0;
        all.limit = std::numeric_limits<std::size_t>::max();
        const std::size_t total = catalog_.list(all).size();
        json items = json::array();
        for (const auto& s : catalog_.list(q)) items.push_back(specimen_to_json(s));
        return {{"ok", true}, {"total", total}, {"offset", q.offset}, {"limit", q.limit}, {"specimens", std::move(items)}};
    }

    json get_specimen(const std::string& id, bool include_deleted) const {
        Specimen s = catalog_.get(id);
        if (s.status == SpecimenStatus::deleted && !include_deleted)
            throw Error(ErrorKind::not_found, "specimen '" + id + "' is deleted");
        return {{"ok", true}, {"specimen", specimen_to_json(s)}};
    }

    json curate(const std::string& id, const std::string& action, const json& body, const std::string& token) {
        if (config_.curator_token.empty() || token != config_.curator_token)
            throw Error(ErrorKind::unauthorized, "curation requires a valid curator token");
        Specimen s;
        if (action == "rename") {
            if (!body.is_object() || !body.contains("fancy_name") || !body["fancy_name"].is_string())
                throw Error(ErrorKind::invalid_input, "rename needs 'fancy_name'");
            s = catalog_.rename(id, body["fancy_name"].get<std::string>());
        } else if (action == "flag_infinite") {
            s = catalog_.set_status(id, SpecimenStatus::flagged_infinite);
        } else if (action == "delete") {
            s = catalog_.set_status(id, SpecimenStatus::deleted);
        } else {
            throw Error(ErrorKind::invalid_input, "unknown curation action '" + action + "'");
        }
        return {{"ok", true}, {"specimen", specimen_to_json(s)}};
    }

    /// Samples are the active specimens' (floor(o2), N) pairs.
    std::vector<RunSample> active_samples() const {
        ListQuery q;
        q.status = SpecimenStatus::active;
        q.sort = SortKey::found_at;
        q.descending = false;
        std::vector<RunSample> out;
        for (const auto& s : catalog_.list(q))
            if (s.n_steps >= 1 && s.o2_floor >= 1) out.push_back({s.o2_floor, s.n_steps, true});
        return out;
    }

    json stats() const {
        const auto samples = active_samples();
        json j{{"ok", true}, {"sample_count", samples.size()}};
        if (samples.empty()) {
            j["insufficient_data"] = true;
            j["tables"] = {{"iq", json::array()}, {"eq", json::array()}, {"sample_count", 0}};
            j["fit"] = nullptr;
            j["fit_error"] = "insufficient data";
            return j;
        }
        const IqEqTable t = estimate_iq_eq(samples);
        j["tables"] = table_to_json(t);
        try {
            j["fit"] = fit_to_json(fit_power_law(t));
            j["insufficient_data"] = false;
        } catch (const Error& e) {
            j["fit"] = nullptr;
            j["fit_error"] = std::string("insufficient data: ") + e.what();
            j["insufficient_data"] = true;
        }
        return j;
    }

    std::string stats_csv(const std::string& table) const {
        const auto samples = active_samples();
        if (table == "samples") return samples_to_csv(samples);
        if (table != "iq" && table != "eq") throw Error(ErrorKind::invalid_input, "table must be samples, iq or eq");
        if (samples.empty()) return table == "iq" ? "z,iq\n" : "n,eq\n";
        const IqEqTable t = estimate_iq_eq(samples);
        return table == "iq" ? iq_to_csv(t) : eq_to_csv(t);
    }

    // --- HTTP binding ------------------------------------------------------

    static Response error_response(const Error& e) {
        json body{{"ok", false}, {"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}};
        if (auto* r = dynamic_cast<const RejectedSubmission*>(&e))
            for (const auto& [k, v] : r->details().items()) body["error"][k] = v;
        return {http_status(e.kind()), body.dump(), "application/json"};
    }

    /// Runs fn and converts its outcome (or failure) into a response.
    template <typename Fn>
    static Response guarded(Fn&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            return error_response(e);
        } catch (const json::exception& e) {
            return error_response(Error(ErrorKind::invalid_input, e.what()));
        } catch (const std::exception& e) {
            return error_response(Error(ErrorKind::server, e.what()));
        }
    }

    void mount(httplib::Server& server) {
        auto reply = [](httplib::Response& res, const Response& r) {
            res.status = r.status;
            res.set_content(r.body, r.content_type);
        };
        auto ok = [](const json& j) { return Response{200, j.dump(), "application/json"}; };
        auto parse_body = [](const httplib::Request& req) {
            try {
                return json::parse(req.body);
            } catch (const json::parse_error& e) {
                throw Error(ErrorKind::invalid_input, std::string("malformed document: ") + e.what());
            }
        };

        server.Get("/api/health", [=](const httplib::Request&, httplib::Response& res) { reply(res, ok({{"ok", true}})); });
        server.Get("/api/tasks/next", [=, this](const httplib::Request&, httplib::Response& res) {
            reply(res, guarded([&] { return ok(fetch_task()); }));
        });
        server.Get(R"(/api/tasks/(\d+))", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] { return ok(task(parse_count(req.matches[1].str(), "task id"))); }));
        });
        server.Post("/api/results", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] {
                auto [all_ok, body] = submit_results(parse_body(req));
                return Response{all_ok ? 200 : 422, body.dump(), "application/json"};
            }));
        });
        server.Post("/api/specimens", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] {
                auto body = submit_specimen(parse_body(req));
                return Response{body["duplicate"].get<bool>() ? 200 : 201, body.dump(), "application/json"};
            }));
        });
        server.Get("/api/specimens", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] {
                std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
                return ok(list_specimens(params));
            }));
        });
        server.Get(R"(/api/specimens/([0-9a-zA-Z]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] {
                const auto flag = req.get_param_value("include_deleted");
                return ok(get_specimen(req.matches[1].str(), flag == "true" || flag == "1"));
            }));
        });
        server.Patch(R"(/api/specimens/([0-9a-zA-Z]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] {
                const json body = parse_body(req);
                if (!body.is_object() || !body.contains("action") || !body["action"].is_string())
                    throw Error(ErrorKind::invalid_input, "curation needs an 'action'");
                return ok(curate(req.matches[1].str(), body["action"].get<std::string>(), body, req.get_header_value("X-Curator-Token")));
            }));
        });
        server.Delete(R"(/api/specimens/([0-9a-zA-Z]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] { return ok(curate(req.matches[1].str(), "delete", json::object(), req.get_header_value("X-Curator-Token"))); }));
        });
        server.Get("/api/stats", [=, this](const httplib::Request& req, httplib::Response& res) {
            reply(res, guarded([&] {
                if (req.get_param_value("format") == "csv") {
                    const std::string table = req.has_param("table") ? req.get_param_value("table") : "samples";
                    return Response{200, stats_csv(table), "text/csv"};
                }
                return ok(stats());
            }));
        });
    }

private:
    static std::size_t parse_count(const std::string& s, const char* what) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) throw Error(ErrorKind::invalid_input, std::string("invalid ") + what);
        return v;
    }

    CatalogStore& catalog_;
    std::optional<Pool> pool_;
    json pool_doc_;
    std::string pool_hash_;
    std::unordered_set<std::string> pool_ids_;
    ServiceConfig config_;
    Clock clock_;
    std::atomic<std::uint64_t> next_task_{0};
    std::mutex submit_mutex_;
};

}  // namespace godngod
