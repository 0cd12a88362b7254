#include "fsel/harness/cli.hpp"

int main(int argc, char** argv) { return fsel::harness::cli_main(argc, argv); }
