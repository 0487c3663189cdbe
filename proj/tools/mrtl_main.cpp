#include "mrtl/commands.hpp"

int main(int argc, char** argv) { return mrtl::run_cli(argc, argv); }
