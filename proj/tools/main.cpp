#include "synforce/cli.hpp"

int main(int argc, char** argv) { return synforce::run_cli(argc, argv); }
