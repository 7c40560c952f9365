#include "dtmpc/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

namespace dtmpc {

std::string_view to_string(BranchKind kind) {
    switch (kind) {
        case BranchKind::VoltageSource: return "voltage-source";
        case BranchKind::CurrentSource: return "current-source";
        case BranchKind::Resistor: return "resistor";
        case BranchKind::Inductor: return "inductor";
        case BranchKind::Capacitor: return "capacitor";
        case BranchKind::Transformer: return "ideal-transformer";
        case BranchKind::Switch: return "switch";
    }
    return "unknown";
}

std::vector<std::string> Netlist::node_names() const {
    std::vector<std::string> names;
    std::set<std::string> seen;
    for (const auto& b : branches) {
        for (const auto& n : b.nodes) {
            if (n == ground) continue;
            if (seen.insert(n).second) names.push_back(n);
        }
    }
    return names;
}

std::size_t Netlist::count(BranchKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        branches.begin(), branches.end(), [kind](const Branch& b) { return b.kind == kind; }));
}

const Branch* Netlist::find(std::string_view id) const {
    for (const auto& b : branches) {
        if (b.id == id) return &b;
    }
    return nullptr;
}

std::vector<std::string> Netlist::switch_ids() const {
    std::vector<std::string> ids;
    for (const auto& b : branches) {
        if (b.kind == BranchKind::Switch) ids.push_back(b.id);
    }
    return ids;
}

Netlist Netlist::with_value(std::string_view id, double value) const {
    Netlist copy = *this;
    for (auto& b : copy.branches) {
        if (b.id == id) {
            b.value = value;
            return copy;
        }
    }
    throw InputError("no element named '" + std::string(id) + "'");
}

std::optional<double> parse_si_value(std::string_view token) {
    if (token.empty()) return std::nullopt;
    double scale = 1.0;
    switch (token.back()) {
        case 'p': scale = 1e-12; break;
        case 'n': scale = 1e-9; break;
        case 'u': scale = 1e-6; break;
        case 'm': scale = 1e-3; break;
        case 'k': scale = 1e3; break;
        case 'M': scale = 1e6; break;
        default: break;
    }
    if (scale != 1.0) token.remove_suffix(1);
    if (token.empty()) return std::nullopt;
    // from_chars rejects a leading '+', accept it for convenience.
    if (token.front() == '+') token.remove_prefix(1);
    double v = 0.0;
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v * scale;
}

namespace {

struct Token {
    std::string_view text;
    int column;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size() || line[i] == '#') break;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) &&
               line[i] != '#') {
            ++i;
        }
        out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
    }
    return out;
}

std::optional<BranchKind> kind_from_prefix(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
        case 'V': return BranchKind::VoltageSource;
        case 'I': return BranchKind::CurrentSource;
        case 'R': return BranchKind::Resistor;
        case 'L': return BranchKind::Inductor;
        case 'C': return BranchKind::Capacitor;
        case 'T': return BranchKind::Transformer;
        case 'S': return BranchKind::Switch;
        default: return std::nullopt;
    }
}

double require_value(const Token& tok, int line) {
    auto v = parse_si_value(tok.text);
    if (!v) throw ParseError("bad numeric value '" + std::string(tok.text) + "'", line, tok.column);
    return *v;
}

}  // namespace

Netlist parse_netlist(std::string_view text) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw ParseError("empty netlist", 1, 1);
    }

    Netlist net;
    std::optional<SourceLocation> ground_loc;
    std::set<std::string> ids;

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = eol + 1;
        ++line_no;

        const auto toks = tokenize(line);
        if (toks.empty()) {
            if (eol == text.size()) break;
            continue;
        }

        const Token& head = toks.front();
        if (head.text.front() == '.') {
            if (head.text != ".gnd") {
                throw ParseError("unknown directive '" + std::string(head.text) + "'", line_no,
                                 head.column);
            }
            if (toks.size() != 2) {
                throw ParseError(".gnd takes exactly one node", line_no, head.column);
            }
            if (ground_loc) throw ParseError("duplicate ground directive", line_no, head.column);
            net.ground = std::string(toks[1].text);
            ground_loc = SourceLocation{line_no, head.column};
            if (eol == text.size()) break;
            continue;
        }

        const auto kind = kind_from_prefix(head.text.front());
        if (!kind) {
            throw ParseError("unknown element kind '" + std::string(head.text) + "'", line_no,
                             head.column);
        }
        if (!ids.insert(std::string(head.text)).second) {
            throw ParseError("duplicate element id '" + std::string(head.text) + "'", line_no,
                             head.column);
        }

        Branch b;
        b.id = std::string(head.text);
        b.kind = *kind;
        b.location = {line_no, head.column};

        const std::size_t n_nodes = (*kind == BranchKind::Transformer) ? 4 : 2;
        if (toks.size() < 1 + n_nodes) {
            throw ParseError("expected " + std::to_string(n_nodes) + " nodes", line_no,
                             head.column);
        }
        for (std::size_t k = 0; k < n_nodes; ++k) b.nodes.emplace_back(toks[1 + k].text);

        std::size_t next = 1 + n_nodes;
        if (*kind == BranchKind::Switch) {
            for (; next < toks.size(); ++next) {
                const auto& t = toks[next];
                const auto eq = t.text.find('=');
                if (eq == std::string_view::npos) {
                    throw ParseError("expected gon=<S> or goff=<S>", line_no, t.column);
                }
                const auto key = t.text.substr(0, eq);
                const Token val{t.text.substr(eq + 1), t.column + static_cast<int>(eq) + 1};
                if (key == "gon") {
                    b.on_conductance = require_value(val, line_no);
                } else if (key == "goff") {
                    b.off_conductance = require_value(val, line_no);
                } else {
                    throw ParseError("unknown switch parameter '" + std::string(key) + "'",
                                     line_no, t.column);
                }
            }
            if (!(b.off_conductance >= 0.0) || !(b.on_conductance > b.off_conductance)) {
                throw ParseError("switch requires gon > goff >= 0", line_no, head.column);
            }
        } else {
            if (next >= toks.size()) throw ParseError("missing value", line_no, head.column);
            b.value = require_value(toks[next], line_no);
            const bool passive = *kind == BranchKind::Resistor || *kind == BranchKind::Inductor ||
                                 *kind == BranchKind::Capacitor ||
                                 *kind == BranchKind::Transformer;
            if (passive && !(b.value > 0.0)) {
                throw ParseError("non-positive component value", line_no, toks[next].column);
            }
            ++next;
            if (next < toks.size()) {
                throw ParseError("unexpected token '" + std::string(toks[next].text) + "'",
                                 line_no, toks[next].column);
            }
        }

        for (std::size_t k = 0; k + 1 < b.nodes.size(); k += 2) {
            if (b.nodes[k] == b.nodes[k + 1]) {
                throw ParseError("element terminals are shorted together", line_no, head.column);
            }
        }
        net.branches.push_back(std::move(b));
        if (eol == text.size()) break;
    }

    if (!ground_loc) throw ParseError("missing ground directive", line_no, 1);
    if (net.branches.empty()) throw ParseError("netlist has no elements", line_no, 1);

    // Every node must be touched by at least two element terminals.
    std::map<std::string, int> degree;
    std::map<std::string, SourceLocation> first_seen;
    for (const auto& b : net.branches) {
        for (const auto& n : b.nodes) {
            ++degree[n];
            first_seen.try_emplace(n, b.location);
        }
    }
    if (degree.find(net.ground) == degree.end()) {
        throw ParseError("ground node '" + net.ground + "' is not connected", ground_loc->line,
                         ground_loc->column);
    }
    for (const auto& [node, d] : degree) {
        if (d < 2) {
            const auto loc = first_seen.at(node);
            throw ParseError("dangling node '" + node + "'", loc.line, loc.column);
        }
    }
    return net;
}

}  // namespace dtmpc
