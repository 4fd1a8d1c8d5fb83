// Placeholder while the core library comes up; the real CLI follows.
int main() { return 0; }
