// Black-box checks of the command-line error contract: exit codes, the
// one-line "error: <kind>: ..." stderr shape, and help behaviour. Takes the
// binary path as its only argument and prints one [PASS]/[FAIL] line per
// check so failures are self-describing in the test log.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <utility>

#include <sys/wait.h>

#include "helpers.hpp"

namespace {

struct RunResult {
    int code = -1;
    std::string err;
};

RunResult run(const std::string& cli, const std::string& args, const std::string& err_path) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>" + err_path;
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : -1);
    result.err = testutil::read_text(err_path);
    return result;
}

int failures = 0;

void expect(bool ok, const std::string& what, const RunResult& result) {
    if (ok) {
        std::printf("[PASS] %s\n", what.c_str());
    } else {
        ++failures;
        std::printf("[FAIL] %s (exit %d, stderr: %s)\n", what.c_str(), result.code,
                    result.err.c_str());
    }
}

bool one_error_line(const std::string& err, const std::string& prefix) {
    if (err.rfind(prefix, 0) != 0) return false;
    const std::size_t newline = err.find('\n');
    return newline != std::string::npos && newline == err.size() - 1;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: %s CLI_PATH\n", argv[0]);
        return 2;
    }
    const std::string cli = argv[1];
    testutil::TempDir dir("cli");
    const std::string err_path = dir.file("stderr.txt");

    RunResult r = run(cli, "", err_path);
    expect(r.code == 2 && one_error_line(r.err, "error: cli:"),
           "no subcommand exits 2 with a one-line cli error", r);

    r = run(cli, "frobnicate", err_path);
    expect(r.code == 2 && one_error_line(r.err, "error: cli:"),
           "unknown subcommand exits 2 with a one-line cli error", r);

    r = run(cli, "synth --bogus-flag", err_path);
    expect(r.code == 2 && one_error_line(r.err, "error: cli:"),
           "unknown flag exits 2 with a one-line cli error", r);

    r = run(cli, "--help", err_path);
    expect(r.code == 0, "--help exits 0", r);

    r = run(cli, "synth --config " + dir.file("absent.conf") + " --quiet", err_path);
    expect(r.code == 1 && one_error_line(r.err, "error: io:") &&
               r.err.find("cannot open config file") != std::string::npos,
           "missing config file exits 1 with a one-line io error", r);

    const std::string bad_conf = dir.file("bad.conf");
    testutil::write_text(bad_conf, "grid.width=abc\n");
    r = run(cli, "synth --config " + bad_conf + " --quiet", err_path);
    expect(r.code == 1 && one_error_line(r.err, "error: config:") &&
               r.err.find("grid.width") != std::string::npos,
           "unparsable config value exits 1 naming the key", r);

    const std::string empty_conf = dir.file("empty_data.conf");
    std::filesystem::create_directories(dir.file("nodata"));
    std::filesystem::create_directories(dir.file("out"));
    testutil::write_text(empty_conf, "io.data_dir=" + dir.file("nodata") + "\n" +
                                         "io.out_dir=" + dir.file("out") + "\n");
    r = run(cli, "ingest --config " + empty_conf + " --quiet", err_path);
    expect(r.code == 1 && one_error_line(r.err, "error: io:"),
           "ingest without sensor files exits 1 with a one-line io error", r);

    if (failures == 0) {
        std::printf("[PASS] cli error contract: all checks passed\n");
        return 0;
    }
    std::printf("[FAIL] cli error contract: %d check(s) failed\n", failures);
    return 1;
}
