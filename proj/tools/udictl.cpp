#include "udi/cli/cli.hpp"

int main(int argc, char** argv) { return udi::cli_dispatch(argc, argv); }
