#include "matchsurv/cli.hpp"

int main(int argc, char** argv) { return matchsurv::run_cli(argc, argv); }
