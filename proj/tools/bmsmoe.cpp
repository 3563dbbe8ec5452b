#include "cli.hpp"

int main(int argc, char** argv) { return bmsmoe::cli::run(argc, argv); }
