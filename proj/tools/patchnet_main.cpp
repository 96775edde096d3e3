#include "patchnet/cli.hpp"

int main(int argc, char** argv) {
  return patchnet::cli::main_entry(argc, argv);
}
