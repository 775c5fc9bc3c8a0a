// Task-parallel Fibonacci; call from inside a parallel region.
long fib(int n) {
    if (n < 2) {
        return n;
    }
    long x = 0;
    long y = 0;
    #pragma omp task shared(x)
    x = fib(n - 1);
    #pragma omp task shared(y)
    y = fib(n - 2);
    #pragma omp taskwait
    return x + y;
}
