#pragma once

#include "dtmpc/core.hpp"

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace dtmpc {

/// On/off pattern of every switch in a netlist; bit i is switch i in netlist order
/// (1 = ON). Rendered as a string with character i holding switch i.
class SwitchState {
public:
    static constexpr int kMaxSwitches = 32;

    SwitchState() = default;
    SwitchState(std::uint32_t bits, int size) : bits_(bits), size_(size) {
        if (size < 0 || size > kMaxSwitches) throw InputError("switch count out of range");
        if (size < kMaxSwitches) bits_ &= (std::uint32_t{1} << size) - 1u;
    }

    static SwitchState from_string(std::string_view s) {
        if (s.size() > kMaxSwitches) throw InputError("switch state string too long");
        std::uint32_t bits = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '1') {
                bits |= std::uint32_t{1} << i;
            } else if (s[i] != '0') {
                throw InputError("switch state must be a string of 0/1");
            }
        }
        return {bits, static_cast<int>(s.size())};
    }

    [[nodiscard]] int size() const noexcept { return size_; }
    [[nodiscard]] std::uint32_t bits() const noexcept { return bits_; }
    [[nodiscard]] bool on(int i) const noexcept { return (bits_ >> i) & 1u; }

    [[nodiscard]] SwitchState with(int i, bool value) const {
        std::uint32_t b = bits_;
        if (value) {
            b |= std::uint32_t{1} << i;
        } else {
            b &= ~(std::uint32_t{1} << i);
        }
        return {b, size_};
    }

    [[nodiscard]] std::string str() const {
        std::string s(static_cast<std::size_t>(size_), '0');
        for (int i = 0; i < size_; ++i) {
            if (on(i)) s[static_cast<std::size_t>(i)] = '1';
        }
        return s;
    }

    auto operator<=>(const SwitchState&) const = default;

private:
    std::uint32_t bits_ = 0;
    int size_ = 0;
};

}  // namespace dtmpc
