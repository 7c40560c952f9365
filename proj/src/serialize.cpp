#include "dtmpc/serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dtmpc {

using Json = nlohmann::json;

namespace {

Json mat_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json vec_to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Mat mat_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw InputError(std::string("matrix '") + what + "' has the wrong number of rows");
    }
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw InputError(std::string("matrix '") + what + "' has the wrong number of columns");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Vec vec_from_json(const Json& j, const char* what) {
    if (!j.is_array()) throw InputError(std::string("'") + what + "' must be an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw InputError(std::string("missing field '") + key + "'");
    return j.at(key);
}

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        throw InputError(std::string("invalid JSON: ") + e.what());
    }
}

void check_version(const Json& j) {
    const int v = field(j, "format_version").get<int>();
    if (v != kFormatVersion) throw InputError("unsupported format_version " + std::to_string(v));
}

Json model_json(const PiecewiseModel& model) {
    const auto& b = model.base();
    Json j;
    j["format_version"] = kFormatVersion;
    j["state_labels"] = b.state_labels;
    j["input_labels"] = b.input_labels;
    j["switch_ids"] = b.switch_ids;
    j["A0"] = mat_to_json(b.A0);
    j["Bu"] = mat_to_json(b.Bu);
    j["Bs"] = mat_to_json(b.Bs);
    j["E"] = mat_to_json(b.E);
    j["Fs"] = mat_to_json(b.Fs);
    j["Gu"] = mat_to_json(b.Gu);
    j["switch_gain"] = vec_to_json(b.switch_gain);
    j["input_values"] = vec_to_json(b.input_values);
    Json lut = Json::array();
    for (const auto& s : model.lut().reachable_states()) {
        lut.push_back({{"state", s.str()}, {"M", mat_to_json(model.lut().at(s))}});
    }
    j["lut"] = std::move(lut);
    return j;
}

PiecewiseModel model_from(const Json& j) {
    check_version(j);
    BaseModel b;
    b.state_labels = field(j, "state_labels").get<std::vector<std::string>>();
    b.input_labels = field(j, "input_labels").get<std::vector<std::string>>();
    b.switch_ids = field(j, "switch_ids").get<std::vector<std::string>>();
    const auto m = static_cast<Eigen::Index>(b.state_labels.size());
    const auto p = static_cast<Eigen::Index>(b.input_labels.size());
    const auto n = static_cast<Eigen::Index>(b.switch_ids.size());
    b.A0 = mat_from_json(field(j, "A0"), m, m, "A0");
    b.Bu = mat_from_json(field(j, "Bu"), m, p, "Bu");
    b.Bs = mat_from_json(field(j, "Bs"), m, n, "Bs");
    b.E = mat_from_json(field(j, "E"), n, m, "E");
    b.Fs = mat_from_json(field(j, "Fs"), n, n, "Fs");
    b.Gu = mat_from_json(field(j, "Gu"), n, p, "Gu");
    b.switch_gain = vec_from_json(field(j, "switch_gain"), "switch_gain");
    b.input_values = vec_from_json(field(j, "input_values"), "input_values");
    if (b.switch_gain.size() != n || b.input_values.size() != p) {
        throw InputError("switch_gain/input_values length mismatch");
    }
    IncrementLUT lut;
    for (const auto& e : field(j, "lut")) {
        const auto s = SwitchState::from_string(field(e, "state").get<std::string>());
        if (s.size() != n) throw InputError("LUT state width does not match the switch count");
        lut.insert(s, mat_from_json(field(e, "M"), m, n, "M"));
    }
    return {std::move(b), std::move(lut)};
}

Json normalizer_json(const Normalizer& n) {
    return {{"mean", vec_to_json(n.mean)}, {"scale", vec_to_json(n.scale)}};
}

Normalizer normalizer_from(const Json& j, Eigen::Index dim) {
    Normalizer n;
    n.mean = vec_from_json(field(j, "mean"), "mean");
    n.scale = vec_from_json(field(j, "scale"), "scale");
    if (n.mean.size() != dim || n.scale.size() != dim) throw InputError("normalizer has the wrong dimension");
    return n;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

double to_double(const std::string& s, int line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw ParseError("not a number: '" + s + "'", line, 1);
    }
    return v;
}

}  // namespace

std::string model_to_json(const PiecewiseModel& model) { return model_json(model).dump(1) + "\n"; }

PiecewiseModel model_from_json(std::string_view text) { return model_from(parse_json(text)); }

std::string timeline_to_json(const SwitchTimeline& timeline) {
    Json j;
    j["period"] = timeline.period;
    j["dead_time"] = timeline.dead_time;
    Json events = Json::array();
    for (const auto& e : timeline.events) {
        events.push_back({{"t", e.time}, {"state", e.state.str()}, {"legs", e.leg_levels}, {"dead", e.dead_mask}});
    }
    j["events"] = std::move(events);
    return j.dump(1) + "\n";
}

std::string nsp_to_json(const NspModel& nsp) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["layer_widths"] = nsp.layer_widths();
    j["step_reference"] = nsp.step_reference();
    j["provenance"] = nsp.provenance;
    j["core"] = model_json(nsp.core());
    Json nets = Json::array();
    for (const auto& [s, n] : nsp.nets()) {
        Json weights = Json::array();
        Json biases = Json::array();
        for (std::size_t l = 0; l < n.net.layer_count(); ++l) {
            weights.push_back(mat_to_json(n.net.weight(l)));
            biases.push_back(vec_to_json(n.net.bias(l)));
        }
        nets.push_back({{"state", s.str()},
                        {"weights", std::move(weights)},
                        {"biases", std::move(biases)},
                        {"input_norm", normalizer_json(n.input_norm)},
                        {"output_norm", normalizer_json(n.output_norm)}});
    }
    j["nets"] = std::move(nets);
    return j.dump(1) + "\n";
}

NspModel nsp_from_json(std::string_view text) {
    const Json j = parse_json(text);
    check_version(j);
    auto core = std::make_shared<const PiecewiseModel>(model_from(field(j, "core")));
    const auto widths = field(j, "layer_widths").get<std::vector<int>>();
    NspModel nsp(core, widths, field(j, "step_reference").get<double>());
    nsp.provenance = field(j, "provenance").get<std::string>();
    for (const auto& e : field(j, "nets")) {
        StateNet sn{FeedForwardNet(widths), {}, {}};
        const auto& w = field(e, "weights");
        const auto& b = field(e, "biases");
        if (w.size() != sn.net.layer_count() || b.size() != sn.net.layer_count()) {
            throw InputError("network layer count does not match layer_widths");
        }
        for (std::size_t l = 0; l < sn.net.layer_count(); ++l) {
            const auto& wl = sn.net.weight(l);
            sn.net.weight(l) = mat_from_json(w[l], wl.rows(), wl.cols(), "weights");
            const Vec bl = vec_from_json(b[l], "biases");
            if (bl.size() != sn.net.bias(l).size()) throw InputError("bias has the wrong length");
            sn.net.bias(l) = bl;
        }
        sn.input_norm = normalizer_from(field(e, "input_norm"), widths.front());
        sn.output_norm = normalizer_from(field(e, "output_norm"), widths.back());
        nsp.set_net(SwitchState::from_string(field(e, "state").get<std::string>()), std::move(sn));
    }
    return nsp;
}

void write_dataset_csv(std::ostream& os, const ResidualDataset& ds) {
    const Eigen::Index m = ds.samples.empty() ? 0 : ds.samples.front().x.size();
    const Eigen::Index p = ds.samples.empty() ? 0 : ds.samples.front().u.size();
    os << "state_bits";
    for (Eigen::Index i = 0; i < m; ++i) os << ",x" << i;
    for (Eigen::Index i = 0; i < p; ++i) os << ",u" << i;
    os << ",h";
    for (Eigen::Index i = 0; i < m; ++i) os << ",r" << i;
    os << ",load,cycle\n";
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << ',' << buf;
    };
    for (const auto& s : ds.samples) {
        os << s.state.str();
        for (Eigen::Index i = 0; i < m; ++i) num(s.x[i]);
        for (Eigen::Index i = 0; i < p; ++i) num(s.u[i]);
        num(s.h);
        for (Eigen::Index i = 0; i < m; ++i) num(s.residual[i]);
        num(s.load);
        os << ',' << s.cycle << '\n';
    }
}

ResidualDataset read_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InputError("dataset CSV is empty");
    const auto head = split(line);
    int m = 0;
    int p = 0;
    for (const auto& h : head) {
        if (!h.empty() && h[0] == 'x') ++m;
        if (!h.empty() && h[0] == 'u') ++p;
    }
    const auto cols = static_cast<std::size_t>(1 + 2 * m + p + 3);
    if (head.empty() || head.front() != "state_bits" || head.size() != cols) {
        throw ParseError("unexpected dataset header", 1, 1);
    }
    ResidualDataset ds;
    int line_no = 1;
    int max_cycle = -1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c = split(line);
        if (c.size() != cols) throw ParseError("wrong number of columns", line_no, 1);
        ResidualSample s;
        s.state = SwitchState::from_string(c[0]);
        std::size_t k = 1;
        s.x.resize(m);
        for (int i = 0; i < m; ++i) s.x[i] = to_double(c[k++], line_no);
        s.u.resize(p);
        for (int i = 0; i < p; ++i) s.u[i] = to_double(c[k++], line_no);
        s.h = to_double(c[k++], line_no);
        s.residual.resize(m);
        for (int i = 0; i < m; ++i) s.residual[i] = to_double(c[k++], line_no);
        s.load = to_double(c[k++], line_no);
        s.cycle = static_cast<int>(to_double(c[k++], line_no));
        max_cycle = std::max(max_cycle, s.cycle);
        ds.samples.push_back(std::move(s));
    }
    ds.cycles = max_cycle + 1;
    return ds;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

}  // namespace dtmpc
