#include "adp/commands.hpp"

int main(int argc, char** argv) { return adp::cli::run(argc, argv); }
