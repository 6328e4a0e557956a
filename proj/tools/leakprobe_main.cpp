#include "leakprobe/cli.hpp"

int main(int argc, char** argv) { return leakprobe::cli::run_cli(argc, argv); }
