#include <cstdio>
int main() { std::puts("sgs"); return 0; }
