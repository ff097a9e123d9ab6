#pragma once

// Line-oriented scenario files.
//
//   # comment
//   [meta]      time_domain = ct|dt, tau_bar, horizon, dt, seed, sample_every
//   [target]    p, n_q (number|auto), modes = w1 w2 ...   or   A: / B: / C: blocks
//   [agents]    "agent <id>" opens an agent; then delay = ..., A: / B: / C: / Cm: blocks
//               or "Cm = identity"
//   [graph]     n = N, then one "i j weight" line per edge (a_ij, 1-based, i receives from j)
//   [protocol]  epsilon = number|auto, rho = number|auto
//   [init]      seed, scale, "x <id> = v1 v2 ..." for explicit agent states
//
// A matrix block is a "NAME:" line followed by rows of numbers; the block ends at
// the first line that is not purely numeric. Every error names its line.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "syncd/error.hpp"
#include "syncd/homogenize.hpp"
#include "syncd/netgraph.hpp"

namespace syncd {

struct AgentSpec {
    std::string id;
    AgentModel model;
    double delay = 0.0;
    int line = 0;
};

struct ScenarioSpec {
    std::string source;
    TimeDomain domain = TimeDomain::Continuous;
    double tau_bar = 0.0;
    double horizon = 10.0;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    int sample_every = 1;

    // target: either synthesized from (p, n_q, modes) or explicit
    std::optional<int> target_p;
    std::optional<int> target_n_q; ///< empty = auto (largest agent degree)
    std::vector<double> target_modes;
    std::optional<Matrix> target_A, target_B, target_C;

    std::vector<AgentSpec> agents;
    std::optional<std::size_t> graph_n;
    struct Edge {
        std::size_t i, j;
        double w;
        int line;
    };
    std::vector<Edge> edges;

    std::optional<double> epsilon; ///< empty = auto
    std::optional<double> rho;     ///< empty = auto

    std::uint64_t init_seed = 1;
    double init_scale = 1.0;
    std::map<std::string, Vector> init_x;

    [[nodiscard]] bool explicit_target() const { return target_A.has_value(); }
    [[nodiscard]] Network network() const {
        const std::size_t n = graph_n.value_or(agents.size());
        Network net(n);
        for (const auto& e : edges) net.set_edge(e.i, e.j, e.w);
        return net;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

class ScenarioParser {
public:
    explicit ScenarioParser(std::string source) { spec_.source = std::move(source); }

    ScenarioSpec parse(std::istream& in) {
        std::string raw;
        while (std::getline(in, raw)) {
            const auto hash = raw.find('#');
            lines_.push_back(trim(hash == std::string::npos ? raw : raw.substr(0, hash)));
        }
        for (pos_ = 0; pos_ < lines_.size();) {
            const std::string& l = lines_[pos_];
            if (l.empty()) {
                ++pos_;
                continue;
            }
            if (l.front() == '[') {
                if (l.back() != ']') fail("unterminated section header");
                section_ = lower(trim(l.substr(1, l.size() - 2)));
                static const char* known[] = {"meta", "target", "agents", "graph", "protocol", "init"};
                if (std::find(std::begin(known), std::end(known), section_) == std::end(known))
                    fail("unknown section [" + section_ + "]");
                ++pos_;
                continue;
            }
            if (section_.empty()) fail("content before the first section header");
            statement(l);
        }
        finish();
        return std::move(spec_);
    }

private:
    [[noreturn]] void fail(const std::string& msg, std::size_t at = SIZE_MAX) const {
        const std::size_t line = (at == SIZE_MAX ? pos_ : at) + 1;
        throw ParseError(spec_.source + ":" + std::to_string(line) + ": " + msg);
    }

    double number(const std::string& s) const {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (trim(s.substr(used)).size() || !std::isfinite(v)) fail("expected a number, got '" + s + "'");
            return v;
        } catch (const std::logic_error&) {
            fail("expected a number, got '" + s + "'");
        }
    }

    std::vector<double> numbers(const std::string& s) const {
        std::istringstream is(s);
        std::vector<double> out;
        std::string tok;
        while (is >> tok) out.push_back(number(tok));
        return out;
    }

    static bool numeric_line(const std::string& s) {
        if (s.empty()) return false;
        std::istringstream is(s);
        std::string tok;
        while (is >> tok) {
            try {
                std::size_t used = 0;
                (void)std::stod(tok, &used);
                if (used != tok.size()) return false;
            } catch (const std::logic_error&) {
                return false;
            }
        }
        return true;
    }

    int integer(const std::string& s) const {
        const double v = number(s);
        if (v != std::floor(v) || std::abs(v) > 1e9) fail("expected an integer, got '" + s + "'");
        return static_cast<int>(v);
    }

    /// Reads the rows following a "NAME:" line.
    Matrix matrix_block() {
        const std::size_t head = pos_++;
        std::vector<std::vector<double>> rows;
        while (pos_ < lines_.size() && numeric_line(lines_[pos_])) {
            rows.push_back(numbers(lines_[pos_]));
            if (rows.back().size() != rows.front().size()) fail("ragged matrix row");
            ++pos_;
        }
        if (rows.empty()) fail("matrix block has no rows", head);
        Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < rows[i].size(); ++j)
                M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        return M;
    }

    void statement(const std::string& l) {
        if (l.back() == ':' && l.find('=') == std::string::npos) {
            block(lower(trim(l.substr(0, l.size() - 1))));
            return;
        }
        if (section_ == "agents" && lower(l.substr(0, 6)) == "agent ") {
            AgentSpec a;
            a.id = trim(l.substr(6));
            if (a.id.empty()) fail("agent needs an id");
            for (const auto& other : spec_.agents)
                if (other.id == a.id) fail("duplicate agent id '" + a.id + "'");
            a.line = static_cast<int>(pos_ + 1);
            spec_.agents.push_back(std::move(a));
            ++pos_;
            return;
        }
        if (section_ == "graph" && l.find('=') == std::string::npos) {
            const auto v = numbers(l);
            if (v.size() != 3) fail("edge lines are 'i j weight'");
            if (v[0] != std::floor(v[0]) || v[1] != std::floor(v[1]) || v[0] < 1 || v[1] < 1)
                fail("edge endpoints are 1-based integers");
            if (v[0] == v[1]) fail("self-loops are not allowed");
            if (!(v[2] > 0.0)) fail("edge weight must be positive");
            spec_.edges.push_back({static_cast<std::size_t>(v[0]) - 1, static_cast<std::size_t>(v[1]) - 1, v[2],
                                   static_cast<int>(pos_ + 1)});
            ++pos_;
            return;
        }
        const auto eq = l.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        raw_key_ = trim(l.substr(0, eq));
        const std::string key = lower(raw_key_);
        const std::string val = trim(l.substr(eq + 1));
        if (val.empty()) fail("missing value for '" + key + "'");
        assign(key, val);
        ++pos_;
    }

    AgentSpec& current_agent() {
        if (spec_.agents.empty()) fail("agent field before any 'agent <id>' line");
        return spec_.agents.back();
    }

    void block(const std::string& name) {
        if (section_ == "target") {
            if (name != "a" && name != "b" && name != "c") fail("unknown target matrix '" + name + "'");
            Matrix M = matrix_block();
            (name == "a" ? spec_.target_A : name == "b" ? spec_.target_B : spec_.target_C) = std::move(M);
            return;
        }
        if (section_ == "agents") {
            AgentSpec& a = current_agent();
            if (name != "a" && name != "b" && name != "c" && name != "cm") fail("unknown agent matrix '" + name + "'");
            Matrix M = matrix_block();
            (name == "a" ? a.model.A : name == "b" ? a.model.B : name == "c" ? a.model.C : a.model.Cm) = std::move(M);
            return;
        }
        fail("matrix blocks are only allowed in [target] and [agents]");
    }

    void assign(const std::string& key, const std::string& val) {
        if (section_ == "meta") {
            if (key == "time_domain") {
                const auto v = lower(val);
                if (v == "ct" || v == "continuous") spec_.domain = TimeDomain::Continuous;
                else if (v == "dt" || v == "discrete") spec_.domain = TimeDomain::Discrete;
                else fail("time_domain must be ct or dt");
            } else if (key == "tau_bar") {
                spec_.tau_bar = number(val);
                if (spec_.tau_bar < 0) fail("tau_bar must be >= 0");
            } else if (key == "horizon") {
                spec_.horizon = number(val);
                if (!(spec_.horizon > 0)) fail("horizon must be positive");
            } else if (key == "dt") {
                spec_.dt = number(val);
                if (!(spec_.dt > 0)) fail("dt must be positive");
            } else if (key == "seed") {
                spec_.seed = static_cast<std::uint64_t>(integer(val));
            } else if (key == "sample_every") {
                spec_.sample_every = integer(val);
                if (spec_.sample_every < 1) fail("sample_every must be >= 1");
            } else {
                fail("unknown [meta] key '" + key + "'");
            }
        } else if (section_ == "target") {
            if (key == "p") {
                spec_.target_p = integer(val);
                if (*spec_.target_p < 1) fail("p must be >= 1");
            } else if (key == "n_q") {
                if (lower(val) == "auto") spec_.target_n_q.reset();
                else {
                    spec_.target_n_q = integer(val);
                    if (*spec_.target_n_q < 1) fail("n_q must be >= 1");
                }
            } else if (key == "modes") {
                spec_.target_modes = numbers(val);
            } else {
                fail("unknown [target] key '" + key + "'");
            }
        } else if (section_ == "agents") {
            AgentSpec& a = current_agent();
            if (key == "delay") {
                a.delay = number(val);
                if (a.delay < 0) fail("delay must be >= 0");
            } else if (key == "cm" && lower(val) == "identity") {
                a.model.Cm = Matrix(); // resolved once A is known
                cm_identity_.push_back(spec_.agents.size() - 1);
            } else {
                fail("unknown agent key '" + key + "'");
            }
        } else if (section_ == "graph") {
            if (key != "n") fail("unknown [graph] key '" + key + "'");
            const int n = integer(val);
            if (n < 1) fail("graph n must be >= 1");
            spec_.graph_n = static_cast<std::size_t>(n);
        } else if (section_ == "protocol") {
            std::optional<double> v;
            if (lower(val) != "auto") {
                v = number(val);
                if (!(*v > 0)) fail(key + " must be positive or auto");
            }
            if (key == "epsilon") spec_.epsilon = v;
            else if (key == "rho") spec_.rho = v;
            else fail("unknown [protocol] key '" + key + "'");
        } else if (section_ == "init") {
            if (key == "seed") spec_.init_seed = static_cast<std::uint64_t>(integer(val));
            else if (key == "scale") spec_.init_scale = number(val);
            else if (key.rfind("x ", 0) == 0) {
                const std::string id = trim(raw_key_.substr(2));
                const auto v = numbers(val);
                spec_.init_x[id] = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
                init_lines_[id] = pos_;
            } else {
                fail("unknown [init] key '" + key + "'");
            }
        }
    }

    void finish() {
        for (std::size_t idx : cm_identity_) {
            auto& a = spec_.agents[idx];
            if (a.model.A.size() == 0) fail("agent '" + a.id + "': Cm = identity needs A", static_cast<std::size_t>(a.line - 1));
            a.model.Cm = Matrix::Identity(a.model.A.rows(), a.model.A.rows());
        }
        if (spec_.agents.empty()) fail("no agents defined", lines_.size() ? lines_.size() - 1 : 0);
        for (const auto& a : spec_.agents) {
            const std::size_t at = static_cast<std::size_t>(a.line - 1);
            if (a.model.A.size() == 0 || a.model.B.size() == 0 || a.model.C.size() == 0)
                fail("agent '" + a.id + "' needs A, B and C", at);
            AgentModel m = a.model;
            if (m.Cm.size() == 0) fail("agent '" + a.id + "' needs Cm (a matrix or 'Cm = identity')", at);
            try {
                m.validate();
            } catch (const std::invalid_argument& e) {
                fail("agent '" + a.id + "': " + e.what(), at);
            }
        }
        const std::size_t n = spec_.graph_n.value_or(spec_.agents.size());
        if (n != spec_.agents.size())
            fail("graph n = " + std::to_string(n) + " but " + std::to_string(spec_.agents.size()) + " agents",
                 lines_.size() - 1);
        for (const auto& e : spec_.edges)
            if (e.i >= n || e.j >= n) fail("edge endpoint exceeds the agent count", static_cast<std::size_t>(e.line - 1));
        const bool any = spec_.target_A || spec_.target_B || spec_.target_C;
        if (any && !(spec_.target_A && spec_.target_B && spec_.target_C))
            fail("explicit target needs all of A, B and C", lines_.size() - 1);
        for (const auto& [id, x] : spec_.init_x) {
            auto it = std::find_if(spec_.agents.begin(), spec_.agents.end(), [&](const AgentSpec& a) { return a.id == id; });
            if (it == spec_.agents.end()) fail("initial state for unknown agent '" + id + "'", init_lines_[id]);
            if (x.size() != it->model.A.rows()) fail("initial state for agent '" + id + "' has the wrong size", init_lines_[id]);
        }
        if (spec_.domain == TimeDomain::Discrete)
            for (const auto& a : spec_.agents)
                if (a.delay != std::floor(a.delay))
                    fail("discrete-time delays must be integers (agent '" + a.id + "')", static_cast<std::size_t>(a.line - 1));
    }

    ScenarioSpec spec_;
    std::vector<std::string> lines_;
    std::size_t pos_ = 0;
    std::string section_;
    std::string raw_key_;
    std::vector<std::size_t> cm_identity_;
    std::map<std::string, std::size_t> init_lines_;
};

} // namespace detail

inline ScenarioSpec parse_scenario(std::istream& in, const std::string& source = "<input>") {
    return detail::ScenarioParser(source).parse(in);
}

inline ScenarioSpec parse_scenario_text(const std::string& text, const std::string& source = "<input>") {
    std::istringstream is(text);
    return parse_scenario(is, source);
}

inline ScenarioSpec load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    return parse_scenario(in, path);
}

} // namespace syncd
