#include "cli.hpp"

int main(int argc, char** argv) { return kfmc::cli::run(argc, argv); }
