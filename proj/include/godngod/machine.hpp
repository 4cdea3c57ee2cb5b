#pragma once

// Binary-alphabet Turing machines: representation, canonical text format,
// solo execution and random generation.
//
// Canonical text:
//
//     states 2
//     1 0 -> 1 R 2
//     1 1 -> 1 L 2
//     2 0 -> 1 L 1
//     2 1 -> 1 R 0
//
// Each rule line is "state symbol -> write move next". Working states are
// 1..n, state 0 is the halt state, symbols are 0/1 and moves are L/R. The
// "states n" header is optional on input (n is then the largest state
// mentioned) and always emitted on output. Blank lines and '#' comments are
// ignored. The machine id is the content hash of the canonical text.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "godngod/error.hpp"
#include "godngod/rng.hpp"
#include "godngod/util.hpp"

namespace godngod {

using Symbol = std::uint8_t;

enum class Move : std::uint8_t { left, right };

struct Action {
    Symbol write = 0;
    Move move = Move::right;
    int next_state = 0;

    bool operator==(const Action&) const = default;
};

struct Rule {
    int state = 1;
    Symbol symbol = 0;
    Action action;

    bool operator==(const Rule&) const = default;
};

class Machine {
public:
    using Table = std::vector<std::optional<Action>>;

    /// table has 2 * n_states slots indexed by (state - 1) * 2 + symbol.
    Machine(int n_states, Table table, std::string name = {})
        : n_states_(n_states), table_(std::move(table)), name_(std::move(name)) {
        if (n_states_ < 1) throw Error(ErrorKind::invalid_input, "machine needs at least one state");
        if (table_.size() != static_cast<std::size_t>(2 * n_states_))
            throw Error(ErrorKind::invalid_input, "table size does not match state count");
        for (const auto& slot : table_) {
            if (!slot) continue;
            if (slot->write > 1) throw Error(ErrorKind::invalid_input, "written symbol out of alphabet");
            if (slot->next_state < 0 || slot->next_state > n_states_)
                throw Error(ErrorKind::invalid_input, "next state out of range");
        }
        id_ = content_hash(canonical_text());
    }

    static Machine from_rules(int n_states, std::span<const Rule> rules, std::string name = {}) {
        if (n_states < 1) throw Error(ErrorKind::invalid_input, "machine needs at least one state");
        Table table(static_cast<std::size_t>(2 * n_states));
        for (const Rule& r : rules) {
            if (r.state < 1 || r.state > n_states) throw Error(ErrorKind::invalid_input, "rule state out of range");
            if (r.symbol > 1) throw Error(ErrorKind::invalid_input, "rule symbol out of alphabet");
            auto& slot = table[slot_index(r.state, r.symbol)];
            if (slot) throw Error(ErrorKind::invalid_input, "duplicate left-hand side");
            slot = r.action;
        }
        return Machine(n_states, std::move(table), std::move(name));
    }

    int n_states() const noexcept { return n_states_; }
    const std::string& id() const noexcept { return id_; }
    const std::string& name() const noexcept { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    /// Entry for (state, symbol); empty when undefined or state is 0.
    const std::optional<Action>& action(int state, Symbol symbol) const noexcept {
        static const std::optional<Action> none;
        if (state < 1 || state > n_states_ || symbol > 1) return none;
        return table_[slot_index(state, symbol)];
    }

    const Table& table() const noexcept { return table_; }

    std::size_t rule_count() const noexcept {
        return static_cast<std::size_t>(std::count_if(table_.begin(), table_.end(), [](const auto& s) { return s.has_value(); }));
    }

    /// Rules sorted by (state, symbol).
    std::vector<Rule> rules() const {
        std::vector<Rule> out;
        for (int q = 1; q <= n_states_; ++q)
            for (Symbol a = 0; a <= 1; ++a)
                if (const auto& act = action(q, a)) out.push_back({q, a, *act});
        return out;
    }

    std::string canonical_text() const {
        std::string out = "states " + std::to_string(n_states_) + "\n";
        for (const Rule& r : rules()) {
            out += std::to_string(r.state);
            out += ' ';
            out += static_cast<char>('0' + r.symbol);
            out += " -> ";
            out += static_cast<char>('0' + r.action.write);
            out += r.action.move == Move::left ? " L " : " R ";
            out += std::to_string(r.action.next_state);
            out += '\n';
        }
        return out;
    }

    /// Structural equality; the display name does not participate.
    bool operator==(const Machine& other) const noexcept {
        return n_states_ == other.n_states_ && table_ == other.table_;
    }

private:
    static std::size_t slot_index(int state, Symbol symbol) noexcept {
        return static_cast<std::size_t>((state - 1) * 2 + symbol);
    }

    int n_states_;
    Table table_;
    std::string name_;
    std::string id_;
};

inline std::string canonical_text(const Machine& m) { return m.canonical_text(); }

namespace detail {

inline std::optional<long> parse_long(std::string_view tok) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) return std::nullopt;
    return v;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace detail

inline Machine parse_machine(std::string_view text, std::string name = {}) {
    std::vector<Rule> rules;
    std::vector<int> rule_lines;
    std::optional<int> declared;
    int max_state = 0;
    int line_no = 0;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto tok = detail::split_ws(line);
        if (tok.empty()) continue;

        if (tok[0] == "states") {
            if (tok.size() != 2) throw ParseError(line_no, "expected 'states <n>'");
            auto n = detail::parse_long(tok[1]);
            if (!n || *n < 1 || *n > 1'000'000) throw ParseError(line_no, "state count must be a positive integer");
            if (declared) throw ParseError(line_no, "duplicate states header");
            if (!rules.empty()) throw ParseError(line_no, "states header must precede rules");
            declared = static_cast<int>(*n);
            continue;
        }

        if (tok.size() != 6 || tok[2] != "->") throw ParseError(line_no, "expected 'q a -> w d q'");
        auto q = detail::parse_long(tok[0]);
        auto a = detail::parse_long(tok[1]);
        auto w = detail::parse_long(tok[3]);
        auto q2 = detail::parse_long(tok[5]);
        if (!q || !a || !w || !q2) throw ParseError(line_no, "expected integers for states and symbols");
        if (*a != 0 && *a != 1) throw ParseError(line_no, "read symbol out of alphabet {0,1}");
        if (*w != 0 && *w != 1) throw ParseError(line_no, "written symbol out of alphabet {0,1}");
        if (tok[4] != "L" && tok[4] != "R") throw ParseError(line_no, "move must be L or R");
        if (*q < 1 || *q > 1'000'000) throw ParseError(line_no, "state out of range");
        if (*q2 < 0 || *q2 > 1'000'000) throw ParseError(line_no, "next state out of range");
        if (declared && (*q > *declared || *q2 > *declared)) throw ParseError(line_no, "state out of range");

        Rule r{static_cast<int>(*q), static_cast<Symbol>(*a),
               Action{static_cast<Symbol>(*w), tok[4] == "L" ? Move::left : Move::right, static_cast<int>(*q2)}};
        for (std::size_t i = 0; i < rules.size(); ++i)
            if (rules[i].state == r.state && rules[i].symbol == r.symbol)
                throw ParseError(line_no, "duplicate left-hand side (first at line " + std::to_string(rule_lines[i]) + ")");
        max_state = std::max({max_state, r.state, r.action.next_state});
        rules.push_back(r);
        rule_lines.push_back(line_no);
    }

    const int n = declared ? *declared : max_state;
    if (n < 1) throw ParseError(line_no, "machine has no rules and no states header");
    return Machine::from_rules(n, rules, std::move(name));
}

/// Unbounded two-way binary tape stored as the set of positions holding 1.
class Tape {
public:
    Symbol read(std::int64_t pos) const { return ones_.contains(pos) ? 1 : 0; }

    void write(std::int64_t pos, Symbol s) {
        if (s) ones_.insert(pos);
        else ones_.erase(pos);
    }

    std::size_t ones() const noexcept { return ones_.size(); }
    const std::unordered_set<std::int64_t>& positions() const noexcept { return ones_; }

    bool operator==(const Tape&) const = default;

private:
    std::unordered_set<std::int64_t> ones_;
};

struct Configuration {
    Tape tape;
    std::int64_t head = 0;
    int state = 1;
    bool halted = false;

    Symbol scanned() const { return tape.read(head); }

    void apply(const Action& act) {
        tape.write(head, act.write);
        head += act.move == Move::left ? -1 : 1;
        state = act.next_state;
        if (state == 0) halted = true;
    }

    bool operator==(const Configuration&) const = default;
};

struct SingleRunResult {
    bool halted = false;
    std::uint64_t steps = 0;
    std::uint64_t ones = 0;

    bool operator==(const SingleRunResult&) const = default;
};

/// Runs m from state 1 on a blank tape. Entering state 0 or reaching an
/// undefined entry halts; otherwise stops unhalted after `budget` steps.
inline SingleRunResult run_single(const Machine& m, std::uint64_t budget, Configuration* final_config = nullptr) {
    if (budget < 1) throw Error(ErrorKind::invalid_input, "budget must be at least 1");
    Configuration c;
    std::uint64_t steps = 0;
    for (;;) {
        if (c.state == 0) break;
        const auto& act = m.action(c.state, c.scanned());
        if (!act) {
            c.halted = true;
            break;
        }
        if (steps == budget) break;
        c.apply(*act);
        ++steps;
    }
    SingleRunResult r{c.halted, steps, c.tape.ones()};
    if (final_config) *final_config = std::move(c);
    return r;
}

/// Full-table machine with every action uniform over {0,1} x {L,R} x {0..n}.
inline Machine random_machine(int n_states, Rng& rng) {
    if (n_states < 1) throw Error(ErrorKind::invalid_input, "n_states must be at least 1");
    Machine::Table table(static_cast<std::size_t>(2 * n_states));
    for (auto& slot : table) {
        Action a;
        a.write = static_cast<Symbol>(rng.below(2));
        a.move = rng.below(2) ? Move::right : Move::left;
        a.next_state = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_states) + 1));
        slot = a;
    }
    return Machine(n_states, std::move(table));
}

// Machine collection documents: either a bare array or {"machines": [...]},
// each entry {"name": ..., "text": ...}. Extra keys are ignored here.

inline std::vector<Machine> machines_from_json(const nlohmann::json& doc) {
    const nlohmann::json* arr = &doc;
    if (doc.is_object()) {
        if (!doc.contains("machines")) throw Error(ErrorKind::invalid_input, "collection document lacks 'machines'");
        arr = &doc.at("machines");
    }
    if (!arr->is_array()) throw Error(ErrorKind::invalid_input, "'machines' must be an array");
    std::vector<Machine> out;
    out.reserve(arr->size());
    for (std::size_t i = 0; i < arr->size(); ++i) {
        const auto& entry = (*arr)[i];
        if (!entry.is_object() || !entry.contains("text") || !entry["text"].is_string())
            throw Error(ErrorKind::invalid_input, "machine entry " + std::to_string(i) + " lacks 'text'");
        std::string name = entry.value("name", std::string{});
        try {
            out.push_back(parse_machine(entry["text"].get<std::string>(), std::move(name)));
        } catch (const ParseError& e) {
            throw Error(ErrorKind::invalid_input, "machine entry " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

inline nlohmann::json machine_to_json(const Machine& m) {
    nlohmann::json j;
    j["id"] = m.id();
    j["name"] = m.name();
    j["text"] = m.canonical_text();
    return j;
}

inline nlohmann::json machines_to_json(std::span<const Machine> machines) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : machines) arr.push_back(machine_to_json(m));
    return nlohmann::json{{"machines", std::move(arr)}};
}

inline std::vector<Machine> load_machine_collection(const std::string& path) {
    const std::string text = read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::invalid_input, path + ": " + e.what());
    }
    return machines_from_json(doc);
}

}  // namespace godngod
