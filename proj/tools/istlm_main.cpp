#include "istlm/cli.hpp"

int main(int argc, char** argv) { return istlm::Dispatch(argc, argv); }
