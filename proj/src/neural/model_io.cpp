#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "v2n/error.hpp"
#include "v2n/neural.hpp"

namespace v2n::neural {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'V', '2', 'N', 'P', 'A', 'R', 'A', 'M'};

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes little-endian");

bool is_json_path(const std::string& path) {
    return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}

json manifest(const TrainedModel& m) {
    const NetConfig& c = m.config;
    json j;
    j["format"] = "v2n-params-1";
    j["config"] = {
        {"model", std::string(model_name(c.model))},
        {"hidden_layers", c.hidden_layers},
        {"neurons", c.neurons},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"history", c.history},
        {"learning_rate", c.learning_rate},
        {"seed", c.seed},
        {"inputs", std::string(input_mode_name(c.inputs))},
        {"online_window", c.online_window},
    };
    j["horizon"] = m.horizon;
    j["target_probe"] = m.members.target_probe;
    // Unbounded neighborhoods are stored as null.
    j["radius_km"] = std::isfinite(m.members.radius_km) ? json(m.members.radius_km) : json(nullptr);
    j["members"] = m.members.members;
    j["distances_km"] = m.members.distances_km;
    json scaler;
    scaler["enabled"] = m.scaler.enabled();
    std::vector<double> lo, hi;
    for (std::size_t f = 0; f < features::kFeatureCount; ++f) {
        lo.push_back(m.scaler.min(f));
        hi.push_back(m.scaler.max(f));
    }
    scaler["min"] = lo;
    scaler["max"] = hi;
    j["scaler"] = scaler;
    j["target_min"] = m.target_min;
    j["target_max"] = m.target_max;
    j["input_width"] = m.net.input_width();
    json layout = json::array();
    for (const auto& t : m.net.layout()) {
        layout.push_back({{"name", t.name}, {"offset", t.offset}, {"rows", t.rows}, {"cols", t.cols}});
    }
    j["layout"] = layout;
    j["param_count"] = m.net.param_count();
    return j;
}

TrainedModel from_manifest(const json& j) {
    TrainedModel m;
    const json& c = j.at("config");
    m.config.model = parse_model(c.at("model").get<std::string>());
    m.config.hidden_layers = c.at("hidden_layers").get<std::size_t>();
    m.config.neurons = c.at("neurons").get<std::size_t>();
    m.config.epochs = c.at("epochs").get<std::size_t>();
    m.config.batch_size = c.at("batch_size").get<std::size_t>();
    m.config.history = c.at("history").get<std::size_t>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.inputs = parse_input_mode(c.at("inputs").get<std::string>());
    m.config.online_window = c.at("online_window").get<std::size_t>();
    m.horizon = j.at("horizon").get<std::size_t>();
    m.members.target_probe = j.at("target_probe").get<std::string>();
    m.members.radius_km = j.at("radius_km").is_null() ? std::numeric_limits<double>::infinity()
                                                       : j.at("radius_km").get<double>();
    m.members.members = j.at("members").get<std::vector<std::string>>();
    m.members.distances_km = j.at("distances_km").get<std::vector<double>>();
    const json& s = j.at("scaler");
    if (s.at("enabled").get<bool>()) {
        const auto lo = s.at("min").get<std::vector<double>>();
        const auto hi = s.at("max").get<std::vector<double>>();
        if (lo.size() != features::kFeatureCount || hi.size() != features::kFeatureCount) {
            throw FormatError("scaler ranges have the wrong length");
        }
        std::array<double, features::kFeatureCount> a{}, b{};
        std::copy(lo.begin(), lo.end(), a.begin());
        std::copy(hi.begin(), hi.end(), b.begin());
        m.scaler = features::FeatureScaler::from_ranges(a, b);
    } else {
        m.scaler = features::FeatureScaler::identity();
    }
    m.target_min = j.at("target_min").get<double>();
    m.target_max = j.at("target_max").get<double>();
    m.net = Network(m.config, j.at("input_width").get<std::size_t>());

    // The rebuilt layout must agree with the stored one.
    const json& layout = j.at("layout");
    const auto& rebuilt = m.net.layout();
    if (layout.size() != rebuilt.size()) {
        throw FormatError("parameter layout does not match the model configuration");
    }
    for (std::size_t i = 0; i < rebuilt.size(); ++i) {
        const json& t = layout[i];
        if (t.at("name").get<std::string>() != rebuilt[i].name ||
            t.at("offset").get<std::size_t>() != rebuilt[i].offset ||
            t.at("rows").get<std::size_t>() != rebuilt[i].rows ||
            t.at("cols").get<std::size_t>() != rebuilt[i].cols) {
            throw FormatError("tensor '" + rebuilt[i].name + "' differs from the stored layout");
        }
    }
    if (j.at("param_count").get<std::size_t>() != m.net.param_count()) {
        throw FormatError("parameter count differs from the stored layout");
    }
    return m;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
    json j = manifest(model);
    std::ostringstream buf(std::ios::binary);
    if (is_json_path(path)) {
        const auto p = model.net.params();
        j["params"] = std::vector<double>(p.begin(), p.end());
        buf << j.dump(1) << '\n';
    } else {
        const std::string text = j.dump();
        const std::uint64_t len = text.size();
        buf.write(kMagic, sizeof kMagic);
        buf.write(reinterpret_cast<const char*>(&len), sizeof len);
        buf.write(text.data(), static_cast<std::streamsize>(text.size()));
        const auto p = model.net.params();
        buf.write(reinterpret_cast<const char*>(p.data()),
                  static_cast<std::streamsize>(p.size() * sizeof(double)));
    }
    // Write the whole bundle at once so a failure leaves no half file.
    const std::string bytes = std::move(buf).str();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path + "'");
    }
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path + "'");
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        if (bytes.size() >= sizeof kMagic && std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0) {
            std::uint64_t len = 0;
            if (bytes.size() < sizeof kMagic + sizeof len) {
                throw FormatError("truncated parameter bundle");
            }
            std::memcpy(&len, bytes.data() + sizeof kMagic, sizeof len);
            const std::size_t head = sizeof kMagic + sizeof len;
            if (bytes.size() < head + len) {
                throw FormatError("truncated parameter manifest");
            }
            TrainedModel m = from_manifest(json::parse(bytes.substr(head, len)));
            auto p = m.net.params();
            if (bytes.size() != head + len + p.size() * sizeof(double)) {
                throw FormatError("parameter payload has " +
                                  std::to_string(bytes.size() - head - len) + " bytes, expected " +
                                  std::to_string(p.size() * sizeof(double)));
            }
            std::memcpy(p.data(), bytes.data() + head + len, p.size() * sizeof(double));
            return m;
        }
        const json j = json::parse(bytes);
        TrainedModel m = from_manifest(j);
        const auto values = j.at("params").get<std::vector<double>>();
        auto p = m.net.params();
        if (values.size() != p.size()) {
            throw FormatError("parameter array has " + std::to_string(values.size()) +
                              " values, expected " + std::to_string(p.size()));
        }
        std::copy(values.begin(), values.end(), p.begin());
        return m;
    } catch (const json::exception& e) {
        throw FormatError("bad parameter bundle '" + path + "': " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError("bad parameter bundle '" + path + "': " + e.what());
    }
}

}  // namespace v2n::neural
