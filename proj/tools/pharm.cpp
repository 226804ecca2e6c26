#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pharm/cli.hpp"

namespace {

// Experiment kinds each verb may run; the first is the default.
const std::map<std::string, std::vector<std::string>> verb_kinds{
    {"solve", {"solve-radial", "solve-2d"}},
    {"verify", {"verify-caccioppoli", "verify-decay"}},
    {"classify", {"classify"}},
    {"oracle", {"oracle-compare"}},
    {"constants", {"constants"}},
};

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::filesystem::filesystem_error("cannot read config", path,
                                                std::make_error_code(std::errc::no_such_file_or_directory));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A verb may omit `kind` in the file; a kind that belongs to another verb is an error.
std::string with_kind(const std::string& text, const std::string& verb)
{
    const auto& kinds = verb_kinds.at(verb);
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto body = pharm::detail::trim(line.substr(0, line.find('#')));
        const auto eq = body.find('=');
        if (eq == std::string::npos || pharm::detail::trim(body.substr(0, eq)) != "kind")
            continue;
        const auto kind = pharm::detail::trim(body.substr(eq + 1));
        if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
            throw pharm::ConfigError("kind '" + kind + "' cannot be run by verb '" + verb + "'");
        return text;
    }
    return "kind = " + kinds.front() + "\n" + text;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"p-harmonic exterior problem workbench"};
    app.require_subcommand(1);
    std::string config_path, out_dir = "runs";
    for (const auto& [verb, kinds] : verb_kinds) {
        auto* sub = app.add_subcommand(verb, "run a " + kinds.front() + " experiment");
        sub->add_option("--config", config_path, "key = value configuration file")->required();
        sub->add_option("--out", out_dir, "root directory for run artifacts");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string verb = app.get_subcommands().front()->get_name();

    pharm::RunConfig cfg;
    try {
        cfg = pharm::parse_config(with_kind(read_text(config_path), verb));
    } catch (const pharm::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return pharm::ExitStatus::ConfigFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << e.what() << '\n';
        return pharm::ExitStatus::IoFailure;
    }

    try {
        const auto art = pharm::run(cfg, out_dir);
        std::cout << art.result.report.str() << "run directory: " << art.dir.string() << '\n';
        return art.status;
    } catch (const pharm::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return pharm::ExitStatus::ConfigFailure;
    } catch (const pharm::PreconditionError& e) {
        std::cerr << "precondition violated: " << e.what() << '\n';
        return pharm::ExitStatus::ConfigFailure;
    } catch (const pharm::SolverError& e) {
        std::cerr << "solver failure: " << e.what() << '\n';
        return pharm::ExitStatus::NonConvergence;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return pharm::ExitStatus::IoFailure;
    }
}
