// Command-line front end. Subcommands land together with the pipeline.
#include <cstdio>

int main(int, char**) {
  std::printf("rigcal: no subcommands wired up yet\n");
  return 2;
}
