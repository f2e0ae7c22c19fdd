#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cpl/repl.hpp"
#include "cpl/session.hpp"

int main(int argc, char** argv) {
    CLI::App app{"cplc - CPL checker, interpreter and REPL"};
    app.require_subcommand(1);

    std::string path;
    std::vector<std::string> prog_args;
    bool rtchecks = false;
    long seed = -1;
    std::string cache_dir;

    auto* check = app.add_subcommand("check", "parse and type-check a program");
    check->add_option("file", path, "program file")->required();
    check->add_option("--cache-dir", cache_dir, "module cache directory");

    auto* run = app.add_subcommand("run", "execute a program");
    run->add_option("file", path, "program file")->required();
    run->add_flag("--rtchecks", rtchecks, "enable run-time bounds and NULL checks");
    run->add_option("--seed", seed, "random seed for RAND/GAUSS");
    run->add_option("--cache-dir", cache_dir, "module cache directory");
    run->add_option("args", prog_args, "program arguments (after --)");

    auto* repl = app.add_subcommand("repl", "interactive session");
    repl->add_flag("--rtchecks", rtchecks, "enable run-time checks");
    repl->add_option("--seed", seed, "random seed for RAND/GAUSS");
    repl->add_option("--cache-dir", cache_dir, "module cache directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    cpl::Session session;
    session.machine.rtchecks = rtchecks;
    if (seed >= 0) session.machine.rng.seed((unsigned)seed);
    if (!cache_dir.empty()) session.registry.cache_dir = cache_dir;

    if (check->parsed()) return session.check_file(path);
    if (run->parsed()) return session.run_file(path, prog_args);
    return cpl::run_repl(session);
}
