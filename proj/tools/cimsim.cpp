#include "cimsim/cli.hpp"

int main(int argc, char** argv) { return cimsim::cli::run(argc, argv); }
