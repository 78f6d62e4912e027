#include "hmr/cli.hpp"

int main(int argc, char** argv) { return hmr::cli::run_cli(argc, argv); }
