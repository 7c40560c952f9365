#include "dtmpc/dab.hpp"

#include <cmath>

namespace dtmpc {

std::string_view default_dab_netlist() {
    return R"(# Dual active bridge, 48 V input, 1:1 transformer, 100 kHz.
.gnd 0
V1    src 0   48
Rs    src p   50m
C1    p   0   230u
# primary bridge: leg A = S1/S2, leg B = S3/S4
S1    p   a   gon=1k goff=1m
S2    a   0   gon=1k goff=1m
S3    p   b   gon=1k goff=1m
S4    b   0   gon=1k goff=1m
RL    a   x   10m
L     x   m   1.13u
T1    m   b   c   d   1
# secondary bridge: leg C = S5/S6, leg D = S7/S8
S5    o   c   gon=1k goff=1m
S6    c   0   gon=1k goff=1m
S7    o   d   gon=1k goff=1m
S8    d   0   gon=1k goff=1m
C2    o   0   230u
RLOAD o   0   576m
)";
}

ModelCache::ModelCache(Netlist net, std::string load_id, BridgeLayout layout)
    : net_(std::move(net)), load_id_(std::move(load_id)), layout_(std::move(layout)) {
    if (net_.find(load_id_) == nullptr) {
        throw InputError("load element '" + load_id_ + "' not found in netlist");
    }
}

double ModelCache::nominal_load() const { return net_.find(load_id_)->value; }

std::shared_ptr<const PiecewiseModel> ModelCache::get(double load_ohms) {
    if (!(load_ohms > 0.0) || !std::isfinite(load_ohms)) {
        throw InputError("load resistance must be positive and finite");
    }
    const long long key = std::llround(std::log(load_ohms) * 1e9);
    auto it = models_.find(key);
    if (it != models_.end()) return it->second;
    auto model = std::make_shared<const PiecewiseModel>(
        compile_model(net_.with_value(load_id_, load_ohms), reachable_states(layout_)));
    models_.emplace(key, model);
    return model;
}

}  // namespace dtmpc
