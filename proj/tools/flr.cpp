#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flr/cli/commands.hpp"

namespace {

using flr::cli::KeyType;

std::string flag_help(const flr::cli::KeySpec& spec) {
    std::string help = spec.help;
    if (spec.default_value && !spec.default_value->empty()) help += " (default: " + *spec.default_value + ")";
    if (!spec.choices.empty()) {
        help += " {";
        for (std::size_t i = 0; i < spec.choices.size(); ++i) help += (i ? "," : "") + spec.choices[i];
        help += "}";
    }
    return help;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Functional linear regression with a Sobolev penalty"};
    app.require_subcommand(1);
    app.set_version_flag("--version", flr::cli::kToolVersion);

    struct Parsed {
        CLI::App* sub;
        std::optional<std::string> config;
        std::map<std::string, std::vector<std::string>> flags;
    };
    std::vector<Parsed> parsed;
    parsed.reserve(flr::cli::command_schemas().size());
    for (const auto& schema : flr::cli::command_schemas()) {
        auto* sub = app.add_subcommand(schema.name, schema.help);
        parsed.push_back({sub, std::nullopt, {}});
        auto& p = parsed.back();
        sub->add_option("--config", p.config, "config file with 'key = value' lines (flags override it)");
        for (const auto& spec : schema.keys) {
            auto* opt = sub->add_option("--" + spec.name, p.flags[spec.name], flag_help(spec));
            opt->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
            opt->allow_extra_args(false);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "config-error: " << e.what() << '\n';
        return 2;
    }

    for (auto& p : parsed) {
        if (!p.sub->parsed()) continue;
        try {
            const auto cfg = flr::cli::load_config(p.sub->get_name(), p.config, p.flags);
            flr::cli::run_command(cfg, std::cerr);
            return 0;
        } catch (const std::exception& e) {
            std::cerr << e.what() << '\n';
            return flr::cli::exit_code_for(e);
        }
    }
    return 2;
}
