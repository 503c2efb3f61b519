#include "cli.hpp"

int main(int argc, char** argv) { return subflow::cli::run(argc, argv); }
