#pragma once

#include "dtmpc/core.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtmpc {

enum class BranchKind {
    VoltageSource,
    CurrentSource,
    Resistor,
    Inductor,
    Capacitor,
    Transformer,
    Switch,
};

std::string_view to_string(BranchKind kind);

struct SourceLocation {
    int line = 0;
    int column = 0;
};

/// One netlist element. Two-terminal elements use nodes[0..1]; an ideal transformer
/// uses nodes {primary+, primary-, secondary+, secondary-} and value = turns ratio N
/// (primary voltage = N * secondary voltage).
struct Branch {
    std::string id;
    BranchKind kind = BranchKind::Resistor;
    std::vector<std::string> nodes;
    double value = 0.0;
    // Switches only.
    double on_conductance = 1e3;
    double off_conductance = 0.0;
    SourceLocation location;
};

struct Netlist {
    std::vector<Branch> branches;
    std::string ground;

    /// Non-ground node names in order of first appearance.
    [[nodiscard]] std::vector<std::string> node_names() const;
    [[nodiscard]] std::size_t count(BranchKind kind) const;
    [[nodiscard]] std::size_t switch_count() const { return count(BranchKind::Switch); }
    [[nodiscard]] const Branch* find(std::string_view id) const;
    /// Switch ids in netlist order; bit i of a switching state refers to switch i.
    [[nodiscard]] std::vector<std::string> switch_ids() const;

    /// Copy with one element's value replaced (e.g. a scheduled load resistance).
    [[nodiscard]] Netlist with_value(std::string_view id, double value) const;
};

/// Parses the line-oriented netlist format:
///
///     # comment
///     .gnd 0
///     V1  in 0 48
///     R1  in a 10m
///     L1  a  b 1.13u
///     T1  p1 p2 s1 s2 1
///     S1  a  b  gon=1k goff=1m
///
/// Kinds are inferred from the id prefix (V, I, R, L, C, T, S). Values accept the SI
/// suffixes p, n, u, m, k, M. Throws ParseError with the offending line and column.
Netlist parse_netlist(std::string_view text);

/// Parses one numeric literal with optional SI suffix; nullopt when malformed.
std::optional<double> parse_si_value(std::string_view token);

}  // namespace dtmpc
