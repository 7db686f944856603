#include "evigrpo/cli.hpp"

int main(int argc, char** argv) { return evigrpo::dispatch(argc, argv); }
