#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cli.hpp"

namespace rpf::cli {

struct Context {
    std::string command;
    json cfg;  // resolved configuration
    std::ostream& out;
    std::ostream& err;
};

using CommandFn = int (*)(Context const&);

struct CommandSpec {
    std::string name;
    std::string summary;
    json defaults;                             // command-specific keys only
    std::map<std::string, std::string> help;  // per key
    CommandFn fn = nullptr;
};

/// Keys shared by every subcommand.
json global_defaults();
std::map<std::string, std::string> global_help();

std::vector<CommandSpec> const& commands();

int cmd_gen(Context const& ctx);
int cmd_train(Context const& ctx);
int cmd_eval(Context const& ctx);
int cmd_pf(Context const& ctx);
int cmd_qss(Context const& ctx);
int cmd_opf(Context const& ctx);
int cmd_export(Context const& ctx);

}  // namespace rpf::cli
