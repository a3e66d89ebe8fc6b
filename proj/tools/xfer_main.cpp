#include "app/commands.hpp"

int main(int argc, char** argv) { return xfer::app::main_entry(argc, argv); }
