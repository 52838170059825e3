#include "sdsmlab/cli.hpp"

int main(int argc, char** argv) { return sdsmlab::run_cli(argc, argv); }
