#include "lisa/cli.hpp"

int main(int argc, char** argv) { return lisa::cli::run_cli(argc, argv); }
