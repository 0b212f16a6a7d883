#include "setgan_cli/cli.hpp"

int main(int argc, char** argv) { return setgan::cli::run(argc, argv); }
