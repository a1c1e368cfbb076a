// Command-line front end. Every subcommand runs one experiment from a JSON
// config through the C API; exit status is the library status code.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "krot/krot.h"

namespace {

struct Subcommand {
  const char* name;
  const char* help;
};

constexpr Subcommand kSubcommands[] = {
    {"solve", "exact (or soft) coupling between the fixture's measures"},
    {"kr", "Knothe-Rosenblatt map of the fixture"},
    {"sweep-hard", "optimal maps over the epsilon schedule and their distance to KR"},
    {"sweep-soft", "soft plans over the (epsilon, lambda) grid"},
    {"diagram", "the four corners of the hard/soft, epsilon/limit square"},
    {"kl-decay", "KL of the second marginal against lambda"},
    {"dynamic", "displacement interpolation and its checks"},
    {"stability", "KR maps of mollified atomic measures"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"krot: optimal transport, anisotropic costs and Knothe-Rosenblatt limits"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(krot_version()));

  std::string config;
  std::string out_dir;
  std::size_t threads = 1;
  bool quiet = false;

  for (const auto& s : kSubcommands) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("-j,--threads", threads, "worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", quiet, "suppress per-cell summary lines");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string experiment = app.get_subcommands().front()->get_name();
  const krot_status status = krot_run(config.c_str(), experiment.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
                                      threads, quiet ? 1 : 0);
  if (status != KROT_OK) {
    std::fprintf(stderr, "krot %s: %s\n", experiment.c_str(), krot_last_error());
    return static_cast<int>(status);
  }
  return 0;
}
