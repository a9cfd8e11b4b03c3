#include "ldpp/cli.hpp"

int main(int argc, char** argv) { return ldpp::run_cli(argc, argv); }
