#include "prtsim/cli.hpp"

int main(int argc, char** argv) { return prt::cli_main(argc, argv); }
