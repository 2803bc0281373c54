#include "v2n/config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "v2n/error.hpp"
#include "v2n/time.hpp"

namespace v2n::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": " + what);
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
}

void expect_array(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array");
}

double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

std::size_t get_count(const json& j, const std::string& path) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
        fail(path, "expected a non-negative integer");
    }
    return j.get<std::size_t>();
}

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

// Runs `body` and prefixes any ConfigError it throws with `path`.
template <class F>
auto at_path(const std::string& path, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        if (what.rfind(path, 0) == 0) throw;
        throw ConfigError(path + ": " + what);
    } catch (const v2n::Error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

using Handler = std::function<void(const json&, const std::string&)>;

void for_keys(const json& obj, const std::string& path,
              const std::vector<std::pair<std::string, Handler>>& handlers) {
    expect_object(obj, path);
    for (const auto& [key, value] : obj.items()) {
        const std::string sub = path.empty() ? key : path + "." + key;
        bool known = false;
        for (const auto& [name, handler] : handlers) {
            if (name == key) {
                handler(value, sub);
                known = true;
                break;
            }
        }
        if (!known) fail(sub, "unknown key");
    }
}

ingest::DateRange parse_range_json(const json& j, const std::string& path) {
    if (j.is_string()) {
        return at_path(path, [&] { return parse_date_range(j.get<std::string>()); });
    }
    if (!j.is_array() || j.size() != 2) fail(path, "expected [first_day, last_day]");
    return at_path(path, [&] {
        ingest::DateRange r;
        r.first_day = parse_timestamp(get_string(j[0], path + "[0]"));
        r.last_day = parse_timestamp(get_string(j[1], path + "[1]"));
        if (r.first_day % kDaySeconds != 0 || r.last_day % kDaySeconds != 0) {
            throw ConfigError("ranges are whole days");
        }
        if (r.last_day < r.first_day) throw ConfigError("range ends before it starts");
        return r;
    });
}

void parse_net(const json& j, const std::string& path, neural::NetConfig& net) {
    for_keys(j, path,
             {
                 {"hidden_layers", [&](const json& v, const std::string& p) { net.hidden_layers = get_count(v, p); }},
                 {"neurons", [&](const json& v, const std::string& p) { net.neurons = get_count(v, p); }},
                 {"epochs", [&](const json& v, const std::string& p) { net.epochs = get_count(v, p); }},
                 {"batch_size", [&](const json& v, const std::string& p) { net.batch_size = get_count(v, p); }},
                 {"history_steps", [&](const json& v, const std::string& p) { net.history = get_count(v, p); }},
                 {"learning_rate", [&](const json& v, const std::string& p) { net.learning_rate = get_number(v, p); }},
                 {"inputs", [&](const json& v, const std::string& p) {
                      net.inputs = at_path(p, [&] { return neural::parse_input_mode(get_string(v, p)); });
                  }},
                 {"online_window", [&](const json& v, const std::string& p) { net.online_window = get_count(v, p); }},
             });
    at_path(path, [&] {
        net.validate();
        return 0;
    });
}

std::string resolve(const std::string& file, const std::string& base_dir) {
    if (file.empty() || base_dir.empty()) return file;
    const std::filesystem::path p(file);
    return p.is_absolute() ? file : (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::vector<evaluation::ExperimentSpec> default_experiments(std::uint64_t seed) {
    std::vector<evaluation::ExperimentSpec> specs;
    for (const char* scenario : {"non-covid", "covid"}) {
        for (const char* technique : {"hold", "des", "tes"}) {
            for (auto mode : {forecast::Mode::offline, forecast::Mode::online}) {
                if (std::string_view(technique) == "hold" && mode == forecast::Mode::online) {
                    continue;
                }
                for (std::size_t k : {1, 3, 6, 9, 12}) {
                    evaluation::ExperimentSpec s;
                    s.technique = technique;
                    s.mode = mode;
                    s.scenario = scenario;
                    s.lookahead = k;
                    s.seed = seed;
                    specs.push_back(s);
                }
            }
        }
    }
    return specs;
}

}  // namespace

ingest::DateRange parse_date_range(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw ConfigError("date range '" + std::string(text) + "' must look like FIRST:LAST");
    }
    ingest::DateRange r;
    r.first_day = parse_timestamp(text.substr(0, colon));
    r.last_day = parse_timestamp(text.substr(colon + 1));
    if (r.first_day % kDaySeconds != 0 || r.last_day % kDaySeconds != 0) {
        throw ConfigError("date range '" + std::string(text) + "' must use whole days");
    }
    if (r.last_day < r.first_day) {
        throw ConfigError("date range '" + std::string(text) + "' ends before it starts");
    }
    return r;
}

RunConfig parse_config(std::string_view json_text, const std::string& base_dir,
                       std::uint64_t default_seed) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    c.seed = default_seed;
    // Seed first so experiments pick it up whatever the key order.
    if (doc.is_object() && doc.contains("seed")) {
        const json& s = doc["seed"];
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
            fail("seed", "expected a non-negative integer");
        }
        c.seed = s.get<std::uint64_t>();
    }
    bool have_experiments = false;
    bool have_policies = false;
    bool have_services = false;

    for_keys(
        doc, "",
        {
            {"dataset", [&](const json& v, const std::string& p) { c.dataset = resolve(get_string(v, p), base_dir); }},
            {"format", [&](const json& v, const std::string& p) {
                 c.format = at_path(p, [&] { return ingest::parse_format(get_string(v, p)); });
             }},
            {"min_coverage", [&](const json& v, const std::string& p) {
                 c.min_coverage = get_number(v, p);
                 if (c.min_coverage < 0.0 || c.min_coverage > 1.0) fail(p, "min_coverage out of [0,1]");
             }},
            {"target", [&](const json& v, const std::string& p) { c.target = get_string(v, p); }},
            {"scenarios", [&](const json& v, const std::string& p) {
                 expect_array(v, p);
                 for (std::size_t i = 0; i < v.size(); ++i) {
                     const std::string ip = p + "[" + std::to_string(i) + "]";
                     ingest::ScenarioSplit s;
                     bool has_train = false, has_test = false;
                     for_keys(v[i], ip,
                              {
                                  {"name", [&](const json& x, const std::string& q) { s.name = get_string(x, q); }},
                                  {"train", [&](const json& x, const std::string& q) { s.train = parse_range_json(x, q); has_train = true; }},
                                  {"test", [&](const json& x, const std::string& q) { s.test = parse_range_json(x, q); has_test = true; }},
                              });
                     if (s.name.empty() || !has_train || !has_test) fail(ip, "name, train and test are required");
                     if (s.train.last_day >= s.test.first_day) fail(ip, "training must end before testing starts");
                     c.scenarios.push_back(s);
                 }
             }},
            {"smoothing", [&](const json& v, const std::string& p) {
                 auto& sm = c.techniques.smoothing;
                 for_keys(v, p,
                          {
                              {"alpha", [&](const json& x, const std::string& q) { sm.alpha = get_number(x, q); }},
                              {"beta", [&](const json& x, const std::string& q) { sm.beta = get_number(x, q); }},
                              {"gamma", [&](const json& x, const std::string& q) { sm.gamma = get_number(x, q); }},
                              {"season_steps", [&](const json& x, const std::string& q) { sm.season_len = get_count(x, q); }},
                          });
                 at_path(p, [&] {
                     sm.validate(smoothing::Model::tes);
                     return 0;
                 });
             }},
            {"networks", [&](const json& v, const std::string& p) {
                 expect_object(v, p);
                 for (const auto& [name, body] : v.items()) {
                     const std::string np = p + "." + name;
                     const auto kind = at_path(np, [&] { return neural::parse_model(name); });
                     parse_net(body, np, c.techniques.nets[kind]);
                 }
             }},
            {"warmup_steps", [&](const json& v, const std::string& p) { c.warmup = get_count(v, p); }},
            {"experiments", [&](const json& v, const std::string& p) {
                 c.experiments = at_path(p, [&] { return evaluation::parse_grid_json(v.dump(), c.seed); });
                 have_experiments = true;
             }},
            {"policies", [&](const json& v, const std::string& p) {
                 expect_array(v, p);
                 for (std::size_t i = 0; i < v.size(); ++i) {
                     const std::string ip = p + "[" + std::to_string(i) + "]";
                     c.policies.push_back(at_path(ip, [&] { return scaling::parse_policy(get_string(v[i], ip)); }));
                 }
                 have_policies = true;
             }},
            {"services", [&](const json& v, const std::string& p) {
                 expect_array(v, p);
                 for (std::size_t i = 0; i < v.size(); ++i) {
                     const std::string ip = p + "[" + std::to_string(i) + "]";
                     c.services.push_back(at_path(ip, [&] { return scaling::service_profile(get_string(v[i], ip)); }));
                 }
                 have_services = true;
             }},
            {"scaling_scenario", [&](const json& v, const std::string& p) { c.scaling_scenario = get_string(v, p); }},
            {"radius_km", [&](const json& v, const std::string& p) {
                 if (!v.is_null()) {
                     c.radius_km = get_number(v, p);
                     if (*c.radius_km < 0.0) fail(p, "radius must be non-negative");
                 }
             }},
            {"output_dir", [&](const json& v, const std::string& p) { c.output_dir = resolve(get_string(v, p), base_dir); }},
            {"seed", [](const json&, const std::string&) {}},
            {"jobs", [&](const json& v, const std::string& p) { c.jobs = get_count(v, p); }},
        });

    if (!have_experiments) c.experiments = default_experiments(c.seed);
    if (!have_policies) {
        c.policies = {scaling::Policy::max(), scaling::Policy::avg(), scaling::Policy::n_min(30),
                      scaling::Policy::n_min(45), scaling::Policy::n_min(60)};
    }
    if (!have_services) c.services = scaling::service_profiles();
    return c;
}

RunConfig load_config(const std::string& path, std::uint64_t default_seed) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string dir = std::filesystem::path(path).parent_path().string();
    RunConfig c = parse_config(buf.str(), dir, default_seed);
    if (!c.dataset.empty() && !std::filesystem::exists(c.dataset)) {
        throw ConfigError("dataset: file '" + c.dataset + "' does not exist");
    }
    return c;
}

}  // namespace v2n::config
