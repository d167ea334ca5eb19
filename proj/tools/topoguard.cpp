#include "cli.hpp"

int main(int argc, char** argv) { return topoguard::cli::run(argc, argv); }
