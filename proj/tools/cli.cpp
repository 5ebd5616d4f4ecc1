#include "cli.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "rpf/io.hpp"

namespace rpf::cli {

namespace {

std::string flag_name(std::string const& key) {
    std::string name = key;
    for (char& c : name) {
        if (c == '_') c = '-';
    }
    return "--" + name;
}

// Converts a config value to the type of its default; integers are accepted
// where reals are expected, never the other way round.
json coerce(std::string const& key, json const& def, json const& value) {
    auto fail = [&](char const* what) -> json {
        throw UsageError("option '" + key + "' expects " + what + ", got " + value.dump());
    };
    if (def.is_boolean()) return value.is_boolean() ? value : fail("true or false");
    if (def.is_number_integer()) {
        if (value.is_number_integer()) return value;
        if (value.is_number_float()) {
            double x = value.get<double>();
            if (std::isfinite(x) && x == std::floor(x)) return static_cast<std::int64_t>(x);
        }
        return fail("an integer");
    }
    if (def.is_number()) return value.is_number() ? json(value.get<double>()) : fail("a number");
    if (def.is_string()) return value.is_string() ? value : fail("a string");
    return value;
}

json parse_flag_text(std::string const& key, json const& def, std::string const& text) {
    try {
        std::size_t used = 0;
        if (def.is_number_integer()) {
            long long v = std::stoll(text, &used);
            if (used == text.size()) return v;
        } else if (def.is_number()) {
            double v = std::stod(text, &used);
            if (used == text.size()) return v;
        } else {
            return text;
        }
    } catch (std::exception const&) {
    }
    throw UsageError(flag_name(key) + ": cannot parse '" + text + "'");
}

}  // namespace

json environment_overrides(EnvLookup const& getenv) {
    json env = json::object();
    if (!getenv) return env;
    if (char const* t = getenv("RPF_THREADS"); t && *t) {
        env["threads"] = parse_flag_text("threads", json(0), t);
    }
    if (char const* d = getenv("RPF_OUT_DIR"); d && *d) env["out_dir"] = std::string(d);
    return env;
}

json config_file_section(json const& file, std::string const& command) {
    if (!file.is_object()) throw UsageError("config file must hold a JSON object");
    json section = json::object();
    json scoped = json::object();
    for (auto it = file.begin(); it != file.end(); ++it) {
        if (it.value().is_object()) {
            if (it.key() == command) scoped = it.value();
            continue;  // sections of other commands
        }
        section[it.key()] = it.value();
    }
    for (auto it = scoped.begin(); it != scoped.end(); ++it) section[it.key()] = it.value();
    return section;
}

json resolve_config(json const& defaults, json const& env, json const& file_section, json const& flags) {
    json resolved = defaults;
    for (json const* layer : {&env, &file_section, &flags}) {
        for (auto it = layer->begin(); it != layer->end(); ++it) {
            if (!defaults.contains(it.key())) throw UsageError("unknown option '" + it.key() + "'");
            resolved[it.key()] = coerce(it.key(), defaults[it.key()], it.value());
        }
    }
    return resolved;
}

std::string config_hash(json const& resolved) {
    json h = resolved;
    for (char const* k : {"threads", "out_dir", "verbose", "config", "network", "injectors", "data", "model", "curve",
                          "baseline", "infeasible_model", "test_feasible", "test_infeasible"}) {
        h.erase(k);
    }
    return io::hex64(io::fnv1a64(h.dump()));
}

json provenance(std::string const& command, json const& resolved, json const& inputs) {
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"command", command},
            {"config_hash", config_hash(resolved)},
            {"inputs", inputs}};
}

int run(int argc, char const* const* argv, std::ostream& out, std::ostream& err, EnvLookup const& getenv) {
    CLI::App app{"Residual power flow: data generation, neural solvers and predict-then-optimize tasks", kToolName};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();

    struct Bound {
        CommandSpec const* spec = nullptr;
        CLI::App* sub = nullptr;
        json defaults;
        std::map<std::string, CLI::Option*> options;
        std::map<std::string, std::string> text;
        std::string config_path;
    };
    auto const& specs = commands();
    std::vector<std::unique_ptr<Bound>> bound;
    auto const ghelp = global_help();
    for (auto const& spec : specs) {
        auto b = std::make_unique<Bound>();
        b->spec = &spec;
        b->sub = app.add_subcommand(spec.name, spec.summary);
        b->defaults = global_defaults();
        for (auto it = spec.defaults.begin(); it != spec.defaults.end(); ++it) b->defaults[it.key()] = it.value();
        for (auto it = b->defaults.begin(); it != b->defaults.end(); ++it) {
            std::string const& key = it.key();
            std::string help;
            if (auto h = spec.help.find(key); h != spec.help.end()) help = h->second;
            if (auto h = ghelp.find(key); h != ghelp.end()) help = h->second;
            std::string name = flag_name(key);
            if (key == "verbose") name = "-v," + name;
            if (it.value().is_boolean()) {
                b->options[key] = b->sub->add_flag(name)->description(help);
            } else {
                std::string shown = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
                b->options[key] = b->sub->add_option(name, b->text[key], help + " [default: " + shown + "]");
            }
        }
        b->sub->add_option("--config", b->config_path, "JSON config file (flags > file > environment)");
        bound.push_back(std::move(b));
    }

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
        app.parse(args);
    } catch (CLI::ParseError const& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    for (auto const& b : bound) {
        if (!b->sub->parsed()) continue;
        std::string const& command = b->spec->name;
        try {
            json flags = json::object();
            for (auto const& [key, opt] : b->options) {
                if (opt->count() == 0) continue;
                flags[key] = b->defaults[key].is_boolean() ? json(true)
                                                           : parse_flag_text(key, b->defaults[key], b->text[key]);
            }
            json file_section = json::object();
            if (!b->config_path.empty()) {
                if (!std::filesystem::exists(b->config_path)) {
                    throw UsageError("config file not found: " + b->config_path);
                }
                json file;
                try {
                    file = json::parse(io::read_file(b->config_path));
                } catch (json::exception const& e) {
                    throw UsageError("config file " + b->config_path + ": " + e.what());
                }
                file_section = config_file_section(file, command);
            }
            json resolved = resolve_config(b->defaults, environment_overrides(getenv), file_section, flags);
            Context ctx{command, resolved, out, err};
            return b->spec->fn(ctx);
        } catch (UsageError const& e) {
            err << kToolName << ' ' << command << ": " << e.what() << '\n';
            return 1;
        } catch (std::exception const& e) {
            err << kToolName << ' ' << command << ": " << e.what() << '\n';
            return 2;
        }
    }
    return 1;
}

}  // namespace rpf::cli
