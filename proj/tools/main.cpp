// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <thread>

#include "commands.hpp"
#include "octsr/error.hpp"
#include "run_manifest.hpp"

namespace octsr::cli {

int Globals::worker_count() const {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace octsr::cli

int main(int argc, char** argv) {
  using namespace octsr::cli;
  CLI::App app{"Octree super-resolution of segmented rock volumes"};
  app.set_version_flag("--version", std::string(OCTSR_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Worker cap (0 = all cores)")
      ->envname("OCTSR_THREADS")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  add_segment(app, g);
  add_downsample(app, g);
  add_pgdata(app, g);
  add_train(app, g);
  add_superres(app, g);
  add_metrics(app, g);
  add_membudget(app, g);
  add_config(app, g);
  add_synth(app, g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const octsr::ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
