#include "hnp/cli/commands.hpp"

int main(int argc, char** argv) { return hnp::cli::run_command(argc, argv); }
