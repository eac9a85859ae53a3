#include "skilltune/cli.hpp"

int main(int argc, char** argv) { return skilltune::cli_main(argc, argv); }
