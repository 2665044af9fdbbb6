#include "impz/cli.hpp"

int main(int argc, char** argv) { return impz::cli::run(argc, argv); }
