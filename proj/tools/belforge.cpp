#include "belforge/cli.hpp"

int main(int argc, char** argv) { return belforge::cli::run(argc, argv); }
